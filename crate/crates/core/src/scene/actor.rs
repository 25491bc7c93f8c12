use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2, RotatedBox2D};

/// Road-actor classes, in output-block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActorClass {
    Vehicle,
    Pedestrian,
    Bicyclist,
}

impl ActorClass {
    pub const ALL: [ActorClass; 3] = [ActorClass::Vehicle, ActorClass::Pedestrian, ActorClass::Bicyclist];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActorClass::Vehicle => "vehicle",
            ActorClass::Pedestrian => "pedestrian",
            ActorClass::Bicyclist => "bicyclist",
        }
    }

    /// Matching IoU threshold for detection AP.
    pub fn iou_threshold(self) -> f64 {
        match self {
            ActorClass::Vehicle => 0.7,
            ActorClass::Pedestrian => 0.1,
            ActorClass::Bicyclist => 0.3,
        }
    }

    pub fn length_range(self) -> (f64, f64) {
        match self {
            ActorClass::Vehicle => (3.5, 6.0),
            ActorClass::Pedestrian => (0.4, 1.0),
            ActorClass::Bicyclist => (1.5, 2.2),
        }
    }

    pub fn width_range(self) -> (f64, f64) {
        match self {
            ActorClass::Vehicle => (1.6, 2.2),
            ActorClass::Pedestrian => (0.4, 0.9),
            ActorClass::Bicyclist => (0.5, 0.8),
        }
    }

    pub fn height_range(self) -> (f64, f64) {
        match self {
            ActorClass::Vehicle => (1.4, 2.2),
            ActorClass::Pedestrian => (1.5, 1.9),
            ActorClass::Bicyclist => (1.5, 1.9),
        }
    }

    pub fn speed_range(self) -> (f64, f64) {
        match self {
            ActorClass::Vehicle => (0.0, 15.0),
            ActorClass::Pedestrian => (0.0, 1.8),
            ActorClass::Bicyclist => (2.0, 7.0),
        }
    }

    pub fn max_turn_rate(self) -> f64 {
        match self {
            ActorClass::Vehicle => 0.2,
            ActorClass::Pedestrian => 0.5,
            ActorClass::Bicyclist => 0.3,
        }
    }

    /// Base LiDAR reflectivity before incidence attenuation.
    pub fn reflectivity(self) -> f64 {
        match self {
            ActorClass::Vehicle => 0.8,
            ActorClass::Pedestrian => 0.45,
            ActorClass::Bicyclist => 0.6,
        }
    }

    pub fn base_color(self) -> [u8; 3] {
        match self {
            ActorClass::Vehicle => [200, 40, 40],
            ActorClass::Pedestrian => [40, 200, 40],
            ActorClass::Bicyclist => [40, 40, 220],
        }
    }
}

impl fmt::Display for ActorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vehicle" => Ok(ActorClass::Vehicle),
            "pedestrian" => Ok(ActorClass::Pedestrian),
            "bicyclist" => Ok(ActorClass::Bicyclist),
            _ => Err(Error::Parse(format!("unknown actor class `{s}`"))),
        }
    }
}

/// Constant speed and turn rate held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSegment {
    pub duration: f64,
    pub speed: f64,
    pub turn_rate: f64,
}

/// Piecewise constant-velocity-and-turn-rate trajectory starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionProfile {
    pub start: Pose2,
    pub segments: Vec<MotionSegment>,
}

impl MotionProfile {
    pub fn stationary(start: Pose2, duration: f64) -> Self {
        Self {
            start,
            segments: vec![MotionSegment {
                duration,
                speed: 0.0,
                turn_rate: 0.0,
            }],
        }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn pose_at(&self, t: f64) -> Result<Pose2> {
        let duration = self.duration();
        // tolerate accumulated rounding in horizon arithmetic
        if !(t >= 0.0 && t <= duration + 1e-9) {
            return Err(Error::TimeOutOfRange { t, duration });
        }
        let mut pose = self.start;
        let mut remaining = t;
        for seg in &self.segments {
            let dt = remaining.min(seg.duration);
            pose = advance(pose, seg.speed, seg.turn_rate, dt);
            remaining -= dt;
            if remaining <= 0.0 {
                break;
            }
        }
        if remaining > 0.0 {
            // only reachable within the 1e-9 tolerance; extend the last segment
            let seg = self.segments.last().copied().unwrap_or(MotionSegment {
                duration: 0.0,
                speed: 0.0,
                turn_rate: 0.0,
            });
            pose = advance(pose, seg.speed, seg.turn_rate, remaining);
        }
        Ok(pose)
    }
}

/// Exact integration of a unicycle with constant speed and turn rate.
pub(crate) fn advance(p: Pose2, v: f64, w: f64, dt: f64) -> Pose2 {
    if dt == 0.0 {
        return p;
    }
    let th = p.yaw;
    if w.abs() < 1e-9 {
        Pose2::new(p.tx + v * dt * th.cos(), p.ty + v * dt * th.sin(), th)
    } else {
        let th1 = th + w * dt;
        let r = v / w;
        Pose2::new(
            p.tx + r * (th1.sin() - th.sin()),
            p.ty - r * (th1.cos() - th.cos()),
            normalize_angle(th1),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub id: u32,
    pub class: ActorClass,
    /// Footprint at t = 0, in the world frame.
    pub bbox: RotatedBox2D,
    pub height: f64,
    pub motion: MotionProfile,
}

impl Actor {
    /// Validates class-dependent size ranges; the motion profile starts at the box pose.
    pub fn new(
        id: u32,
        class: ActorClass,
        bbox: RotatedBox2D,
        height: f64,
        segments: Vec<MotionSegment>,
    ) -> Result<Self> {
        let (lo, hi) = class.length_range();
        if bbox.length < lo || bbox.length > hi {
            return Err(Error::InvalidArgument(format!(
                "{class} length {} outside [{lo}, {hi}]",
                bbox.length
            )));
        }
        if !(height > 0.0) {
            return Err(Error::InvalidArgument(format!("actor height {height} must be positive")));
        }
        Ok(Self {
            id,
            class,
            bbox,
            height,
            motion: MotionProfile {
                start: bbox.pose(),
                segments,
            },
        })
    }

    pub fn box_at(&self, t: f64) -> Result<RotatedBox2D> {
        let p = actor_pose_at(self, t)?;
        Ok(RotatedBox2D {
            cx: p.tx,
            cy: p.ty,
            length: self.bbox.length,
            width: self.bbox.width,
            heading: p.yaw,
        })
    }
}

/// World pose of the actor's box center at time `t`.
pub fn actor_pose_at(actor: &Actor, t: f64) -> Result<Pose2> {
    actor.motion.pose_at(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn actor(speed: f64, turn: f64) -> Actor {
        let b = RotatedBox2D::new(1.0, 2.0, 4.5, 1.8, 0.0).unwrap();
        Actor::new(
            0,
            ActorClass::Vehicle,
            b,
            1.6,
            vec![MotionSegment {
                duration: 5.0,
                speed,
                turn_rate: turn,
            }],
        )
        .unwrap()
    }

    #[test]
    fn initial_pose() {
        let a = actor(3.0, 0.1);
        assert_eq!(actor_pose_at(&a, 0.0).unwrap(), a.bbox.pose());
    }

    #[test]
    fn straight_line() {
        let a = actor(10.0, 0.0);
        let p = actor_pose_at(&a, 0.5).unwrap();
        assert!((p.tx - 6.0).abs() < 1e-12 && (p.ty - 2.0).abs() < 1e-12);
    }

    #[test]
    fn arc_matches_fine_step_integration() {
        let a = actor(8.0, 0.4);
        // RK4 on (x, y, θ) with 1e-4 s steps
        let (mut x, mut y, mut th) = (1.0f64, 2.0f64, 0.0f64);
        let (v, w, h) = (8.0f64, 0.4f64, 1e-4f64);
        let f = |th: f64| (v * th.cos(), v * th.sin());
        for _ in 0..(3.0 / h).round() as usize {
            let k1 = f(th);
            let k2 = f(th + 0.5 * h * w);
            let k3 = f(th + 0.5 * h * w);
            let k4 = f(th + h * w);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            y += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            th += h * w;
        }
        let p = actor_pose_at(&a, 3.0).unwrap();
        assert!((p.tx - x).abs() < 1e-6 && (p.ty - y).abs() < 1e-6, "{p:?} vs ({x}, {y})");
        // radius v/ω around the turn center
        let (ccx, ccy) = (1.0, 2.0 + v / w);
        assert!(((p.tx - ccx).hypot(p.ty - ccy) - v / w).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_rejected() {
        let a = actor(1.0, 0.0);
        assert!(matches!(actor_pose_at(&a, 5.5), Err(Error::TimeOutOfRange { .. })));
        assert!(actor_pose_at(&a, -0.1).is_err());
    }

    #[test]
    fn size_ranges_enforced() {
        let b = RotatedBox2D::new(0.0, 0.0, 3.0, 1.8, 0.0).unwrap();
        assert!(Actor::new(0, ActorClass::Vehicle, b, 1.5, vec![]).is_err());
        let p = RotatedBox2D::new(0.0, 0.0, 0.6, 0.5, 0.0).unwrap();
        assert!(Actor::new(0, ActorClass::Pedestrian, p, 1.7, vec![]).is_ok());
    }
}
