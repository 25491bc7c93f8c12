//! Planar and 3D primitives shared by every stage of the pipeline.
//!
//! Frames are right-handed and centered on the self-driving vehicle (SDV):
//! x forward, y left, z up. Motion is planar, so poses are SE(2) and the
//! z coordinate is carried through transforms untouched.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    // rem_euclid can return TAU for tiny negative inputs
    if r <= -PI {
        r += TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, o: &Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist(&self, o: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - o.x, self.y - o.y, self.z - o.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Planar rigid transform. Maps a point `p` in the child frame to
/// `R(yaw) p + t` in the parent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub tx: f64,
    pub ty: f64,
    pub yaw: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(tx: f64, ty: f64, yaw: f64) -> Self {
        Self {
            tx,
            ty,
            yaw: normalize_angle(yaw),
        }
    }

    pub const fn identity() -> Self {
        Self {
            tx: 0.0,
            ty: 0.0,
            yaw: 0.0,
        }
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        Pose2::new(-(c * self.tx + s * self.ty), s * self.tx - c * self.ty, -self.yaw)
    }

    pub fn apply2(&self, p: Point2) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(c * p.x - s * p.y + self.tx, s * p.x + c * p.y + self.ty)
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let q = self.apply2(p.xy());
        Point3::new(q.x, q.y, p.z)
    }

    /// Rotates a direction without translating it.
    pub fn rotate(&self, v: Point2) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    pub fn compose(&self, other: &Pose2) -> Pose2 {
        se2_compose(self, other)
    }
}

/// `a ∘ b`: the resulting pose applies `b` first, then `a`.
pub fn se2_compose(a: &Pose2, b: &Pose2) -> Pose2 {
    let t = a.apply2(Point2::new(b.tx, b.ty));
    Pose2::new(t.x, t.y, a.yaw + b.yaw)
}

pub fn transform_points(pts: &[Point3], pose: &Pose2) -> Vec<Point3> {
    pts.iter().map(|p| pose.apply(*p)).collect()
}

/// Oriented BEV rectangle. `length` runs along the heading direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedBox2D {
    pub cx: f64,
    pub cy: f64,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

impl RotatedBox2D {
    pub fn new(cx: f64, cy: f64, length: f64, width: f64, heading: f64) -> Result<Self> {
        if !(length > 0.0 && width > 0.0) || !cx.is_finite() || !cy.is_finite() || !heading.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "box needs positive finite size, got l={length} w={width}"
            )));
        }
        Ok(Self {
            cx,
            cy,
            length,
            width,
            heading: normalize_angle(heading),
        })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.cx, self.cy, self.heading)
    }

    pub fn corners(&self) -> [Point2; 4] {
        box_corners(self)
    }

    /// Re-expresses the box through a rigid transform.
    pub fn transformed(&self, pose: &Pose2) -> RotatedBox2D {
        let c = pose.apply2(self.center());
        RotatedBox2D {
            cx: c.x,
            cy: c.y,
            length: self.length,
            width: self.width,
            heading: normalize_angle(self.heading + pose.yaw),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        let local = self.pose().inverse().apply2(p);
        local.x.abs() <= 0.5 * self.length && local.y.abs() <= 0.5 * self.width
    }

    /// Circumscribed radius, for cheap rejection tests.
    pub fn radius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

/// Corners in counter-clockwise order, starting at front-right:
/// (+l/2, −w/2), (+l/2, +w/2), (−l/2, +w/2), (−l/2, −w/2) in the box frame.
pub fn box_corners(b: &RotatedBox2D) -> [Point2; 4] {
    let (s, c) = b.heading.sin_cos();
    let (hl, hw) = (0.5 * b.length, 0.5 * b.width);
    let local = [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)];
    local.map(|(x, y)| Point2::new(b.cx + c * x - s * y, b.cy + s * x + c * y))
}

/// Shoelace area; positive for counter-clockwise rings.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Even-odd crossing test.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(&Point2::new(a.x + t * dx, a.y + t * dy))
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// True when no two non-adjacent edges of the closed ring properly cross.
pub fn polygon_is_simple(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Sutherland–Hodgman clip of `subject` against the convex, counter-clockwise `clip` ring.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % m]);
        let input = std::mem::take(&mut out);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    out.push(line_intersection(prev, cur, a, b));
                }
                out.push(cur);
            } else if prev_in {
                out.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    out
}

/// Overlap area of two rotated rectangles.
pub fn box_intersection_area(a: &RotatedBox2D, b: &RotatedBox2D) -> f64 {
    if a.center().dist(&b.center()) > a.radius() + b.radius() {
        return 0.0;
    }
    signed_area(&clip_convex(&box_corners(a), &box_corners(b))).max(0.0)
}

fn line_intersection(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    let cp = cross(a, b, p);
    let cq = cross(a, b, q);
    let t = cp / (cp - cq);
    Point2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!(close(normalize_angle(3.0 * PI), PI, 1e-12));
        assert!(close(normalize_angle(-FRAC_PI_2), -FRAC_PI_2, 1e-15));
        assert!(close(normalize_angle(7.0), 7.0 - TAU, 1e-12));
    }

    #[test]
    fn compose_identity() {
        let p = Pose2::new(1.5, -2.0, 0.3);
        assert_eq!(se2_compose(&Pose2::identity(), &p), p);
    }

    #[test]
    fn compose_quarter_turn() {
        let a = Pose2::new(0.0, 0.0, FRAC_PI_2);
        let b = Pose2::new(1.0, 0.0, 0.0);
        let q = se2_compose(&a, &b).apply2(Point2::default());
        assert!(close(q.x, 0.0, 1e-12) && close(q.y, 1.0, 1e-12));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Pose2::new(3.0, -7.0, 2.5);
        let id = se2_compose(&p, &p.inverse());
        assert!(close(id.tx, 0.0, 1e-12) && close(id.ty, 0.0, 1e-12) && close(id.yaw, 0.0, 1e-12));
    }

    #[test]
    fn transform_examples() {
        let pts = [Point3::new(0.0, 0.0, 1.0)];
        assert_eq!(transform_points(&pts, &Pose2::identity()), pts.to_vec());
        let moved = transform_points(&pts, &Pose2::new(2.0, -3.0, 0.0));
        assert_eq!(moved[0], Point3::new(2.0, -3.0, 1.0));
        let flipped = transform_points(&[Point3::new(1.0, 0.0, 0.0)], &Pose2::new(0.0, 0.0, PI));
        assert!(close(flipped[0].x, -1.0, 1e-12) && close(flipped[0].y, 0.0, 1e-12));
    }

    #[test]
    fn corners_examples() {
        let b = RotatedBox2D::new(0.0, 0.0, 2.0, 1.0, 0.0).unwrap();
        let c = box_corners(&b);
        assert_eq!(c[0], Point2::new(1.0, -0.5));
        assert_eq!(c[2], Point2::new(-1.0, 0.5));
        assert!(signed_area(&c) > 0.0);

        let r = RotatedBox2D::new(0.0, 0.0, 2.0, 1.0, FRAC_PI_2).unwrap();
        for p in box_corners(&r) {
            assert!(close(p.x.abs(), 0.5, 1e-12) && close(p.y.abs(), 1.0, 1e-12));
        }

        // unit-diagonal square rotated 45° has its corners on the axes
        let d = RotatedBox2D::new(0.0, 0.0, SQRT_2, SQRT_2, FRAC_PI_4).unwrap();
        let expect = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (p, (ex, ey)) in box_corners(&d).iter().zip(expect) {
            assert!(close(p.x, ex, 1e-12) && close(p.y, ey, 1e-12), "{p:?}");
        }
    }

    #[test]
    fn invalid_box_rejected() {
        assert!(RotatedBox2D::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(RotatedBox2D::new(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn simple_polygon_check() {
        let square = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(polygon_is_simple(&square));
        let bowtie = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(!polygon_is_simple(&bowtie));
        assert!(point_in_polygon(Point2::new(0.5, 0.5), &square));
        assert!(!point_in_polygon(Point2::new(1.5, 0.5), &square));
    }

    fn pose() -> impl Strategy<Value = Pose2> {
        (-50.0..50.0f64, -50.0..50.0f64, -PI..PI).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    proptest! {
        #[test]
        fn compose_associative(a in pose(), b in pose(), c in pose()) {
            let l = se2_compose(&se2_compose(&a, &b), &c);
            let r = se2_compose(&a, &se2_compose(&b, &c));
            prop_assert!(close(l.tx, r.tx, 1e-10) && close(l.ty, r.ty, 1e-10));
            prop_assert!(normalize_angle(l.yaw - r.yaw).abs() < 1e-10);
        }

        #[test]
        fn transform_preserves_distances(
            p in pose(),
            pts in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64, -5.0..5.0f64), 2..12),
        ) {
            let pts: Vec<Point3> = pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
            let moved = transform_points(&pts, &p);
            for i in 0..pts.len() {
                prop_assert_eq!(moved[i].z, pts[i].z);
                for j in 0..pts.len() {
                    prop_assert!(close(pts[i].dist(&pts[j]), moved[i].dist(&moved[j]), 1e-10));
                }
            }
        }

        #[test]
        fn corners_refit(cx in -50.0..50.0f64, cy in -50.0..50.0f64, l in 0.1..10.0f64, w in 0.1..10.0f64, th in -PI..PI) {
            let b = RotatedBox2D::new(cx, cy, l, w, th).unwrap();
            let c = box_corners(&b);
            let mx = c.iter().map(|p| p.x).sum::<f64>() / 4.0;
            let my = c.iter().map(|p| p.y).sum::<f64>() / 4.0;
            prop_assert!(close(mx, cx, 1e-9) && close(my, cy, 1e-9));
            // edge 3→0 runs along the heading, edge 0→1 across it
            prop_assert!(close(c[0].dist(&c[3]), l, 1e-9));
            prop_assert!(close(c[0].dist(&c[1]), w, 1e-9));
            let fit = (c[0].y - c[3].y).atan2(c[0].x - c[3].x);
            let dth = normalize_angle(2.0 * (fit - th)) / 2.0;
            prop_assert!(dth.abs() < 1e-9);
            prop_assert!(close(signed_area(&c), l * w, 1e-9 * l * w));
        }
    }
}
