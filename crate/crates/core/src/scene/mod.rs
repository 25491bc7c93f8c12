//! Seeded synthetic worlds: actors with trajectories, an HD map, simulated
//! LiDAR sweeps and front-camera images, and future-trajectory labels.

mod actor;
mod camera;
mod labels;
mod lidar;
mod map;
pub(crate) mod raycast;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{box_intersection_area, Pose2, RotatedBox2D};

pub use actor::{actor_pose_at, Actor, ActorClass, MotionProfile, MotionSegment};
pub use camera::{render_camera, Image};
pub use labels::{scene_labels, ActorLabel, LabelSet, Waypoint, LABEL_RATE_HZ};
pub use lidar::{simulate_sweep, LidarPoint, LidarSensorSpec, Sweep};
pub use map::{MapElement, MapGeometry, MapLayer};

use raycast::BoxTarget;

/// Scene generation parameters. Parsed from a plain `key = value` document.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub vehicles: usize,
    pub pedestrians: usize,
    pub bicyclists: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub duration: f64,
    pub seed: u64,
    pub ego_speed: f64,
    pub ego_turn_rate: f64,
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            vehicles: 4,
            pedestrians: 3,
            bicyclists: 2,
            x_min: -40.0,
            x_max: 80.0,
            y_min: -45.0,
            y_max: 45.0,
            duration: 5.0,
            seed: 0,
            ego_speed: 5.0,
            ego_turn_rate: 0.0,
            max_attempts: 1000,
        }
    }
}

impl SceneConfig {
    pub fn actor_count(&self, class: ActorClass) -> usize {
        match class {
            ActorClass::Vehicle => self.vehicles,
            ActorClass::Pedestrian => self.pedestrians,
            ActorClass::Bicyclist => self.bicyclists,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SceneConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| Error::Parse(format!("line {}: `{key}`: {e}", lineno + 1));
            macro_rules! num {
                ($t:ty) => {
                    value.parse::<$t>().map_err(|e| bad(&e))?
                };
            }
            match key {
                "vehicles" => cfg.vehicles = num!(usize),
                "pedestrians" => cfg.pedestrians = num!(usize),
                "bicyclists" => cfg.bicyclists = num!(usize),
                "x_min" => cfg.x_min = num!(f64),
                "x_max" => cfg.x_max = num!(f64),
                "y_min" => cfg.y_min = num!(f64),
                "y_max" => cfg.y_max = num!(f64),
                "duration" => cfg.duration = num!(f64),
                "seed" => cfg.seed = num!(u64),
                "ego_speed" => cfg.ego_speed = num!(f64),
                "ego_turn_rate" => cfg.ego_turn_rate = num!(f64),
                "max_attempts" => cfg.max_attempts = num!(usize),
                _ => return Err(Error::Parse(format!("line {}: unknown key `{key}`", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut kv = BTreeMap::new();
        kv.insert("vehicles", self.vehicles.to_string());
        kv.insert("pedestrians", self.pedestrians.to_string());
        kv.insert("bicyclists", self.bicyclists.to_string());
        kv.insert("x_min", self.x_min.to_string());
        kv.insert("x_max", self.x_max.to_string());
        kv.insert("y_min", self.y_min.to_string());
        kv.insert("y_max", self.y_max.to_string());
        kv.insert("duration", self.duration.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("ego_speed", self.ego_speed.to_string());
        kv.insert("ego_turn_rate", self.ego_turn_rate.to_string());
        kv.insert("max_attempts", self.max_attempts.to_string());
        kv.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return Err(Error::InvalidArgument("scene extent is empty".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidArgument("scene duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub actors: Vec<Actor>,
    /// World-frame map.
    pub map: MapGeometry,
    pub ego_motion: MotionProfile,
    pub seed: u64,
}

const EGO_LENGTH: f64 = 4.8;
const EGO_WIDTH: f64 = 2.0;
const PLACEMENT_MARGIN: f64 = 0.5;

impl Scene {
    pub fn duration(&self) -> f64 {
        self.config.duration
    }

    pub fn ego_pose_at(&self, t: f64) -> Result<Pose2> {
        self.ego_motion.pose_at(t)
    }

    /// Actor footprints at `t`, expressed in the ego frame at `t`.
    pub fn boxes_in_ego(&self, t: f64) -> Result<Vec<(usize, RotatedBox2D)>> {
        let to_ego = self.ego_pose_at(t)?.inverse();
        self.actors
            .iter()
            .enumerate()
            .map(|(i, a)| Ok((i, a.box_at(t)?.transformed(&to_ego))))
            .collect()
    }

    pub(crate) fn targets_in_ego(&self, t: f64) -> Result<Vec<BoxTarget>> {
        Ok(self
            .boxes_in_ego(t)?
            .into_iter()
            .map(|(i, b)| BoxTarget::new(&b, self.actors[i].height, self.actors[i].class))
            .collect())
    }

    /// Map re-expressed in the ego frame at `t`.
    pub fn map_in_ego(&self, t: f64) -> Result<MapGeometry> {
        Ok(self.map.transformed(&self.ego_pose_at(t)?.inverse()))
    }
}

fn inflated(b: &RotatedBox2D, margin: f64) -> RotatedBox2D {
    RotatedBox2D {
        length: b.length + margin,
        width: b.width + margin,
        ..*b
    }
}

fn random_segments<R: Rng>(rng: &mut R, class: ActorClass, duration: f64) -> Vec<MotionSegment> {
    let n = rng.gen_range(1..=3usize);
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.0..duration)).collect();
    cuts.sort_by(f64::total_cmp);
    let (vmin, vmax) = class.speed_range();
    let still = class != ActorClass::Bicyclist && rng.gen_bool(0.25);
    let mut prev = 0.0;
    let mut segs = Vec::with_capacity(n);
    for end in cuts.into_iter().chain(std::iter::once(duration)) {
        let speed = if still { 0.0 } else { rng.gen_range(vmin..=vmax) };
        let w = class.max_turn_rate();
        segs.push(MotionSegment {
            duration: end - prev,
            speed,
            turn_rate: if still { 0.0 } else { rng.gen_range(-w..=w) },
        });
        prev = end;
    }
    segs
}

/// Deterministic scene for `(config, seed)`; actors never overlap at t = 0.
pub fn build_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = map::generate_map(&mut rng, config.x_min, config.x_max, config.y_min, config.y_max);

    let ego_box = RotatedBox2D::new(0.0, 0.0, EGO_LENGTH, EGO_WIDTH, 0.0)?;
    let mut placed: Vec<RotatedBox2D> = vec![inflated(&ego_box, 2.0)];
    let mut actors = Vec::new();
    for class in ActorClass::ALL {
        for _ in 0..config.actor_count(class) {
            let id = actors.len() as u32;
            let (l0, l1) = class.length_range();
            let (w0, w1) = class.width_range();
            let (h0, h1) = class.height_range();
            let mut found = None;
            for _ in 0..config.max_attempts {
                let l = rng.gen_range(l0..=l1);
                let w = rng.gen_range(w0..=w1);
                let r = 0.5 * l.hypot(w);
                if config.x_max - config.x_min <= 2.0 * r || config.y_max - config.y_min <= 2.0 * r {
                    break;
                }
                let cx = rng.gen_range((config.x_min + r)..(config.x_max - r));
                let cy = rng.gen_range((config.y_min + r)..(config.y_max - r));
                let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                let b = RotatedBox2D::new(cx, cy, l, w, heading)?;
                let probe = inflated(&b, PLACEMENT_MARGIN);
                if placed.iter().all(|p| box_intersection_area(p, &probe) == 0.0) {
                    found = Some(b);
                    break;
                }
            }
            let b = found.ok_or(Error::SceneTooDense {
                actor: actors.len(),
                attempts: config.max_attempts,
            })?;
            placed.push(inflated(&b, PLACEMENT_MARGIN));
            let height = rng.gen_range(h0..=h1);
            let segs = random_segments(&mut rng, class, config.duration);
            actors.push(Actor::new(id, class, b, height, segs)?);
        }
    }

    let ego_motion = MotionProfile {
        start: Pose2::identity(),
        segments: vec![MotionSegment {
            duration: config.duration,
            speed: config.ego_speed,
            turn_rate: config.ego_turn_rate,
        }],
    };
    Ok(Scene {
        config: config.clone(),
        actors,
        map,
        ego_motion,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene() {
        let cfg = SceneConfig {
            vehicles: 0,
            pedestrians: 0,
            bicyclists: 0,
            ..Default::default()
        };
        let s = build_scene(&cfg, 3).unwrap();
        assert!(s.actors.is_empty());
    }

    #[test]
    fn deterministic() {
        let cfg = SceneConfig::default();
        assert_eq!(build_scene(&cfg, 11).unwrap(), build_scene(&cfg, 11).unwrap());
        assert_ne!(build_scene(&cfg, 11).unwrap(), build_scene(&cfg, 12).unwrap());
    }

    #[test]
    fn non_overlap_over_seed_sweep() {
        let cfg = SceneConfig {
            vehicles: 8,
            pedestrians: 6,
            bicyclists: 4,
            ..Default::default()
        };
        for seed in 0..100 {
            let s = build_scene(&cfg, seed).unwrap();
            for (i, a) in s.actors.iter().enumerate() {
                for b in &s.actors[i + 1..] {
                    assert_eq!(box_intersection_area(&a.bbox, &b.bbox), 0.0, "seed {seed}");
                }
                let c = a.bbox.center();
                assert!(c.x > cfg.x_min && c.x < cfg.x_max && c.y > cfg.y_min && c.y < cfg.y_max);
            }
        }
    }

    #[test]
    fn too_dense() {
        let cfg = SceneConfig {
            vehicles: 200,
            x_min: -10.0,
            x_max: 10.0,
            y_min: -10.0,
            y_max: 10.0,
            max_attempts: 50,
            ..Default::default()
        };
        assert!(matches!(build_scene(&cfg, 0), Err(Error::SceneTooDense { .. })));
    }

    #[test]
    fn config_text_roundtrip() {
        let cfg = SceneConfig {
            vehicles: 2,
            seed: 9,
            duration: 4.5,
            ..Default::default()
        };
        assert_eq!(SceneConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let parsed = SceneConfig::parse("# comment\nvehicles = 1\n pedestrians=0 # inline\n").unwrap();
        assert_eq!((parsed.vehicles, parsed.pedestrians), (1, 0));
        assert!(SceneConfig::parse("cars = 3").is_err());
        assert!(SceneConfig::parse("vehicles = many").is_err());
    }
}
