//! Ray casting against extruded actor boxes and the ground plane.

use crate::geometry::{Point2, Point3, Pose2, RotatedBox2D};

use super::actor::ActorClass;

/// An actor box in the sensor's ego frame, prepared for slab tests.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxTarget {
    pub to_local: Pose2,
    pub half_length: f64,
    pub half_width: f64,
    pub height: f64,
    pub class: ActorClass,
    pub center: Point2,
    pub radius: f64,
}

impl BoxTarget {
    pub fn new(b: &RotatedBox2D, height: f64, class: ActorClass) -> Self {
        Self {
            to_local: b.pose().inverse(),
            half_length: 0.5 * b.length,
            half_width: 0.5 * b.width,
            height,
            class,
            center: b.center(),
            radius: b.radius(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum HitKind {
    Actor(usize),
    Ground,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Hit {
    pub distance: f64,
    /// |cos| of the angle between the ray and the surface normal.
    pub cos_incidence: f64,
    pub kind: HitKind,
}

/// Slab test in the box frame. Rays starting inside a box never hit it.
pub(crate) fn ray_box(origin: Point3, dir: Point3, target: &BoxTarget) -> Option<(f64, f64)> {
    let o2 = target.to_local.apply2(origin.xy());
    let d2 = target.to_local.rotate(dir.xy());
    let o = [o2.x, o2.y, origin.z];
    let d = [d2.x, d2.y, dir.z];
    let lo = [-target.half_length, -target.half_width, 0.0];
    let hi = [target.half_length, target.half_width, target.height];
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
            continue;
        }
        let mut t1 = (lo[a] - o[a]) / d[a];
        let mut t2 = (hi[a] - o[a]) / d[a];
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        if t1 > t_near {
            t_near = t1;
            axis = a;
        }
        t_far = t_far.min(t2);
    }
    if t_near > t_far || t_near <= 0.0 {
        return None;
    }
    Some((t_near, d[axis].abs()))
}

/// Nearest hit along a unit-length ray, or `None` beyond `max_range`.
pub(crate) fn cast(
    origin: Point3,
    dir: Point3,
    targets: &[BoxTarget],
    ground: bool,
    max_range: f64,
) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, t) in targets.iter().enumerate() {
        // cheap horizontal rejection: distance from the circumscribed circle center to the ray line
        let (vx, vy) = (t.center.x - origin.x, t.center.y - origin.y);
        let h2 = dir.x * dir.x + dir.y * dir.y;
        if h2 > 1e-18 {
            let perp = (vx * dir.y - vy * dir.x).abs() / h2.sqrt();
            if perp > t.radius + 1e-9 {
                continue;
            }
        }
        if let Some((dist, cos)) = ray_box(origin, dir, t) {
            if dist <= max_range && best.is_none_or(|b| dist < b.distance) {
                best = Some(Hit {
                    distance: dist,
                    cos_incidence: cos,
                    kind: HitKind::Actor(i),
                });
            }
        }
    }
    if ground && dir.z < 0.0 && origin.z > 0.0 {
        let dist = origin.z / -dir.z;
        if dist <= max_range && best.is_none_or(|b| dist < b.distance) {
            best = Some(Hit {
                distance: dist,
                cos_incidence: -dir.z,
                kind: HitKind::Ground,
            });
        }
    }
    best
}
