use crate::geometry::{Point2, Point3, RotatedBox2D};
use crate::projection::{camera_pixel_of, CameraModel};
use crate::scene::ActorLabel;

use super::decode::DetBox;

/// Half-open range interval [lo, hi) on the distance from the SDV, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeBand {
    pub lo: f64,
    pub hi: f64,
}

impl RangeBand {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, range: f64) -> bool {
        range >= self.lo && range < self.hi
    }

    pub fn name(&self) -> String {
        format!("{}-{}m", self.lo, self.hi)
    }

    /// Consecutive bands split at `edges`, e.g. [0, 25, 50].
    pub fn split(edges: &[f64]) -> Vec<RangeBand> {
        edges.windows(2).map(|w| RangeBand::new(w[0], w[1])).collect()
    }
}

/// Anything with a ground-plane center.
pub trait Located {
    fn center(&self) -> Point2;
}

impl Located for RotatedBox2D {
    fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }
}

impl Located for DetBox {
    fn center(&self) -> Point2 {
        self.bbox.center()
    }
}

impl Located for ActorLabel {
    fn center(&self) -> Point2 {
        self.bbox.center()
    }
}

/// The box center, lifted to the camera's mount height, must land on a
/// valid pixel of the cropped image. `None` stands for a 360° sensor.
pub fn in_camera_fov(center: Point2, camera: Option<&CameraModel>) -> bool {
    match camera {
        None => true,
        Some(cam) => camera_pixel_of(&Point3::new(center.x, center.y, cam.mount_height), cam).is_some(),
    }
}

/// Items inside the camera FOV whose center range falls in `band`.
pub fn filter_camera_fov<'a, T: Located>(items: &'a [T], camera: Option<&CameraModel>, band: &RangeBand) -> Vec<&'a T> {
    items
        .iter()
        .filter(|it| {
            let c = it.center();
            band.contains(c.x.hypot(c.y)) && in_camera_fov(c, camera)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;

    fn camera() -> CameraModel {
        CameraModel::from_fov(1920, 1200, 90.0, 438, Pose2::identity(), 1.6).unwrap()
    }

    fn b(x: f64, y: f64) -> RotatedBox2D {
        RotatedBox2D::new(x, y, 4.0, 2.0, 0.0).unwrap()
    }

    #[test]
    fn behind_excluded_ahead_included() {
        let cam = camera();
        let items = [b(-20.0, 0.0), b(30.0, 0.0)];
        let kept = filter_camera_fov(&items, Some(&cam), &RangeBand::new(0.0, 75.0));
        assert_eq!(kept, vec![&items[1]]);
        assert_eq!(filter_camera_fov(&items, Some(&cam), &RangeBand::new(25.0, 50.0)).len(), 1);
        assert!(filter_camera_fov(&items, Some(&cam), &RangeBand::new(0.0, 25.0)).is_empty());
    }

    #[test]
    fn no_camera_is_identity() {
        let items: Vec<_> = (0..12).map(|i| b(10.0 * (i as f64 * 0.5).cos(), 10.0 * (i as f64 * 0.5).sin())).collect();
        assert_eq!(filter_camera_fov(&items, None, &RangeBand::new(0.0, f64::INFINITY)).len(), 12);
    }

    #[test]
    fn split_bands() {
        let bands = RangeBand::split(&[0.0, 25.0, 50.0, 75.0]);
        assert_eq!(bands.len(), 3);
        assert_eq!(bands[1].name(), "25-50m");
        assert!(bands[0].contains(0.0) && !bands[0].contains(25.0));
    }
}
