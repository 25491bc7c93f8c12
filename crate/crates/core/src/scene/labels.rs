use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, RotatedBox2D};

use super::actor::ActorClass;
use super::Scene;

/// Future waypoints are sampled at this rate.
pub const LABEL_RATE_HZ: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLabel {
    pub id: u32,
    pub class: ActorClass,
    /// Footprint at the label time, ego frame.
    pub bbox: RotatedBox2D,
    pub height: f64,
    /// Horizons h = 1..=H, same frame as `bbox`; box size is shared.
    pub waypoints: Vec<Waypoint>,
}

impl ActorLabel {
    pub fn box_at(&self, h: usize) -> RotatedBox2D {
        if h == 0 {
            return self.bbox;
        }
        let w = self.waypoints[h - 1];
        RotatedBox2D {
            cx: w.cx,
            cy: w.cy,
            heading: w.heading,
            ..self.bbox
        }
    }

    pub fn waypoint(&self, h: usize) -> Waypoint {
        if h == 0 {
            Waypoint {
                cx: self.bbox.cx,
                cy: self.bbox.cy,
                heading: self.bbox.heading,
            }
        } else {
            self.waypoints[h - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub timestamp: f64,
    pub horizon: usize,
    pub actors: Vec<ActorLabel>,
}

impl LabelSet {
    pub fn empty(timestamp: f64, horizon: usize) -> Self {
        Self {
            timestamp,
            horizon,
            actors: Vec::new(),
        }
    }
}

/// Ground truth at `t` with `horizon` future waypoints at 10 Hz, all
/// expressed in the ego frame at `t`.
pub fn scene_labels(scene: &Scene, t: f64, horizon: usize) -> Result<LabelSet> {
    let end = t + horizon as f64 / LABEL_RATE_HZ;
    if end > scene.duration() + 1e-9 || t < 0.0 {
        return Err(Error::TimeOutOfRange {
            t: end,
            duration: scene.duration(),
        });
    }
    let to_ego = scene.ego_pose_at(t)?.inverse();
    let mut actors = Vec::with_capacity(scene.actors.len());
    for a in &scene.actors {
        let bbox = a.box_at(t)?.transformed(&to_ego);
        let mut waypoints = Vec::with_capacity(horizon);
        for h in 1..=horizon {
            let p = to_ego.compose(&a.motion.pose_at(t + h as f64 / LABEL_RATE_HZ)?);
            waypoints.push(Waypoint {
                cx: p.tx,
                cy: p.ty,
                heading: normalize_angle(p.yaw),
            });
        }
        actors.push(ActorLabel {
            id: a.id,
            class: a.class,
            bbox,
            height: a.height,
            waypoints,
        });
    }
    Ok(LabelSet {
        timestamp: t,
        horizon,
        actors,
    })
}
