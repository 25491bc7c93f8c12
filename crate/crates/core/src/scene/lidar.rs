use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose2};

use super::raycast::{cast, HitKind};
use super::Scene;

/// Spinning LiDAR geometry. Row `m` fires at `elevations[m]`; columns are
/// evenly spaced azimuths `j · 2π / azimuth_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarSensorSpec {
    /// Radians, strictly decreasing with row index.
    pub elevations: Vec<f64>,
    pub azimuth_bins: usize,
    pub max_range: f64,
    pub mount_height: f64,
    pub ground_reflectivity: f64,
    pub ground_returns: bool,
}

impl LidarSensorSpec {
    pub fn new(
        elevations: Vec<f64>,
        azimuth_bins: usize,
        max_range: f64,
        mount_height: f64,
    ) -> Result<Self> {
        let spec = Self {
            elevations,
            azimuth_bins,
            max_range,
            mount_height,
            ground_reflectivity: 0.3,
            ground_returns: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `beams` elevations evenly spaced from `top_deg` down to `bottom_deg`.
    pub fn uniform(beams: usize, top_deg: f64, bottom_deg: f64, azimuth_bins: usize) -> Result<Self> {
        if beams == 0 {
            return Err(Error::InvalidArgument("sensor needs at least one beam".into()));
        }
        let step = if beams > 1 {
            (top_deg - bottom_deg) / (beams - 1) as f64
        } else {
            0.0
        };
        let elevations = (0..beams)
            .map(|m| (top_deg - step * m as f64).to_radians())
            .collect();
        Self::new(elevations, azimuth_bins, 120.0, 1.8)
    }

    /// 64 beams in [−25°, +2°], 2048 azimuth steps.
    pub fn beams64() -> Self {
        Self::uniform(64, 2.0, -25.0, 2048).expect("valid preset")
    }

    /// 32 beams in [−30°, +10°], 2048 azimuth steps.
    pub fn beams32() -> Self {
        Self::uniform(32, 10.0, -30.0, 2048).expect("valid preset")
    }

    pub fn beam_count(&self) -> usize {
        self.elevations.len()
    }

    pub fn azimuth_step(&self) -> f64 {
        TAU / self.azimuth_bins as f64
    }

    pub fn azimuth(&self, col: usize) -> f64 {
        col as f64 * self.azimuth_step()
    }

    pub fn validate(&self) -> Result<()> {
        if self.elevations.is_empty() || self.azimuth_bins == 0 {
            return Err(Error::InvalidArgument("sensor needs beams and azimuth bins".into()));
        }
        if self.elevations.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidArgument("elevations must strictly decrease by row".into()));
        }
        if !(self.max_range > 0.0 && self.mount_height > 0.0) {
            return Err(Error::InvalidArgument("max range and mount height must be positive".into()));
        }
        Ok(())
    }
}

/// One return. Coordinates are in the ego frame at capture (ground at z = 0);
/// `range` is measured from the sensor origin at `mount_height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub range: f64,
    pub intensity: f64,
    /// Radians in [0, 2π).
    pub azimuth: f64,
    pub laser_id: u32,
}

impl LidarPoint {
    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub timestamp: f64,
    pub points: Vec<LidarPoint>,
    /// World pose of the ego vehicle at capture.
    pub ego_pose: Pose2,
}

impl Sweep {
    pub fn positions(&self) -> Vec<Point3> {
        self.points.iter().map(LidarPoint::position).collect()
    }
}

/// Casts one ray per (beam, azimuth) and keeps the nearest surface hit.
/// Points are emitted beam-major, then by azimuth.
pub fn simulate_sweep(scene: &Scene, spec: &LidarSensorSpec, t: f64) -> Result<Sweep> {
    spec.validate()?;
    let ego_pose = scene.ego_pose_at(t)?;
    let targets = scene.targets_in_ego(t)?;
    let origin = Point3::new(0.0, 0.0, spec.mount_height);
    let azimuths: Vec<(f64, f64, f64)> = (0..spec.azimuth_bins)
        .map(|j| {
            let a = spec.azimuth(j);
            (a, a.cos(), a.sin())
        })
        .collect();
    let mut points = Vec::new();
    for (m, &elev) in spec.elevations.iter().enumerate() {
        let (se, ce) = elev.sin_cos();
        for &(az, ca, sa) in &azimuths {
            let dir = Point3::new(ce * ca, ce * sa, se);
            let Some(hit) = cast(origin, dir, &targets, spec.ground_returns, spec.max_range) else {
                continue;
            };
            let refl = match hit.kind {
                HitKind::Actor(i) => targets[i].class.reflectivity(),
                HitKind::Ground => spec.ground_reflectivity,
            };
            let d = hit.distance;
            points.push(LidarPoint {
                x: origin.x + d * dir.x,
                y: origin.y + d * dir.y,
                z: origin.z + d * dir.z,
                range: d,
                intensity: (refl * hit.cos_incidence).clamp(0.0, 1.0),
                azimuth: az,
                laser_id: m as u32,
            });
        }
    }
    Ok(Sweep {
        timestamp: t,
        points,
        ego_pose,
    })
}
