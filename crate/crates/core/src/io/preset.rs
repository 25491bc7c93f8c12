use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::RangeBand;
use crate::geometry::Pose2;
use crate::nn::NetConfig;
use crate::projection::{CameraModel, CameraView};
use crate::raster::{GridSpec, RvSpec, ViewGeometry};
use crate::scene::{LidarSensorSpec, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    /// 150×100 m grid, 64-beam LiDAR at 10 Hz, 1920×1200 90° camera cropped by 438 rows.
    Atg4d,
    /// 100×100 m grid, 32-beam LiDAR at 20 Hz, 1600×900 70° camera, no crop.
    Nuscenes,
    /// Reduced sensor and grid sizes with narrow network widths, for fast
    /// end-to-end runs.
    Desk,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [PresetName::Atg4d, PresetName::Nuscenes, PresetName::Desk];

    pub fn name(self) -> &'static str {
        match self {
            PresetName::Atg4d => "atg4d",
            PresetName::Nuscenes => "nuscenes",
            PresetName::Desk => "desk",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown preset `{s}` (expected atg4d, nuscenes or desk)")))
    }
}

/// Everything a dataset configuration fixes: sensors, grids, history, horizon,
/// scene population, network widths and evaluation bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: PresetName,
    pub grid: GridSpec,
    /// Sweeps stacked into the BEV input (T).
    pub history: usize,
    pub sweep_period: f64,
    pub horizon: usize,
    pub output_stride: usize,
    pub lidar: LidarSensorSpec,
    pub camera: CameraModel,
    pub camera_stride: usize,
    pub scene: SceneConfig,
    pub net: NetConfig,
    /// Full FOV band first, then the sub-bands.
    pub bands: Vec<RangeBand>,
}

fn front_camera(width: usize, height: usize, hfov: f64, crop: usize) -> CameraModel {
    CameraModel::from_fov(width, height, hfov, crop, Pose2::new(1.5, 0.0, 0.0), 1.6).expect("valid preset camera")
}

fn bands(edges: &[f64]) -> Vec<RangeBand> {
    let mut v = vec![RangeBand::new(edges[0], *edges.last().unwrap())];
    v.extend(RangeBand::split(edges));
    v
}

impl Preset {
    pub fn get(name: PresetName) -> Self {
        match name {
            PresetName::Atg4d => Self::atg4d(),
            PresetName::Nuscenes => Self::nuscenes(),
            PresetName::Desk => Self::desk(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::get(name.parse()?))
    }

    pub fn atg4d() -> Self {
        let grid = GridSpec::centered(150.0, 100.0, 3.2, 0.16, 0.16, 0.2, -0.2).expect("valid preset grid");
        let history = 10;
        Self {
            name: PresetName::Atg4d,
            grid,
            history,
            sweep_period: 0.1,
            horizon: 30,
            output_stride: 4,
            lidar: LidarSensorSpec::beams64(),
            camera: front_camera(1920, 1200, 90.0, 438),
            camera_stride: 8,
            scene: SceneConfig {
                vehicles: 12,
                pedestrians: 6,
                bicyclists: 4,
                x_min: -45.0,
                x_max: 95.0,
                y_min: -45.0,
                y_max: 45.0,
                duration: 4.0,
                ..SceneConfig::default()
            },
            net: NetConfig {
                bev_in: history * grid.layers(),
                ..NetConfig::default()
            },
            bands: bands(&[0.0, 25.0, 50.0, 75.0]),
        }
    }

    pub fn nuscenes() -> Self {
        let grid = GridSpec::centered(100.0, 100.0, 8.0, 0.125, 0.125, 0.2, -0.2).expect("valid preset grid");
        let history = 10;
        Self {
            name: PresetName::Nuscenes,
            grid,
            history,
            sweep_period: 0.05,
            horizon: 30,
            output_stride: 4,
            lidar: LidarSensorSpec::beams32(),
            camera: front_camera(1600, 900, 70.0, 0),
            camera_stride: 8,
            scene: SceneConfig {
                vehicles: 10,
                pedestrians: 6,
                bicyclists: 3,
                x_min: -30.0,
                x_max: 63.0,
                y_min: -45.0,
                y_max: 45.0,
                duration: 3.5,
                ..SceneConfig::default()
            },
            net: NetConfig {
                bev_in: history * grid.layers(),
                ..NetConfig::default()
            },
            bands: bands(&[0.0, 25.0, 50.0]),
        }
    }

    pub fn desk() -> Self {
        let grid = GridSpec::centered(40.0, 30.0, 3.2, 0.25, 0.25, 0.4, -0.2).expect("valid preset grid");
        let history = 3;
        let lidar = LidarSensorSpec::uniform(16, 2.0, -25.0, 512).expect("valid preset lidar");
        Self {
            name: PresetName::Desk,
            grid,
            history,
            sweep_period: 0.1,
            horizon: 30,
            output_stride: 4,
            lidar,
            camera: front_camera(320, 200, 90.0, 72),
            camera_stride: 8,
            scene: SceneConfig {
                vehicles: 3,
                pedestrians: 2,
                bicyclists: 2,
                x_min: -12.0,
                x_max: 26.0,
                y_min: -14.0,
                y_max: 14.0,
                duration: 3.3,
                ego_speed: 3.0,
                ..SceneConfig::default()
            },
            net: NetConfig {
                bev_in: history * grid.layers(),
                camera_widths: [8, 16, 16],
                rv_width: 8,
                bev_width: 16,
                head_width: 16,
                ..NetConfig::default()
            },
            bands: bands(&[0.0, 10.0, 20.0, 30.0]),
        }
    }

    pub fn rv(&self) -> RvSpec {
        RvSpec::from_sensor(&self.lidar)
    }

    pub fn camera_view(&self) -> ViewGeometry {
        ViewGeometry::Camera(CameraView {
            camera: self.camera.clone(),
            stride: self.camera_stride,
        })
    }

    /// Timestamp of the newest sweep, which is also the label time.
    pub fn reference_time(&self) -> f64 {
        (self.history - 1) as f64 * self.sweep_period
    }

    pub fn with_camera(mut self, use_camera: bool) -> Self {
        self.net.use_camera = use_camera;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in PresetName::ALL {
            assert_eq!(p.name().parse::<PresetName>().unwrap(), p);
        }
        assert!("kitti".parse::<PresetName>().is_err());
    }

    #[test]
    fn scene_covers_horizon() {
        for p in PresetName::ALL {
            let pr = Preset::get(p);
            assert!(pr.reference_time() + pr.horizon as f64 / 10.0 <= pr.scene.duration + 1e-9, "{p}");
            assert_eq!(pr.net.horizon, pr.horizon);
            assert_eq!(pr.net.output_stride, pr.output_stride);
        }
    }
}
