//! Per-point view projectors and point-based feature projection between views.
//!
//! Every LiDAR point can be located in each view: its BEV cell, its RV pixel and
//! (when visible) its camera pixel. Projecting a feature map from a source view
//! into a target view gathers the source feature under each point and averages
//! all gathered features that fall into the same target cell.

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose2};
use crate::raster::{FeatureMap, GridSpec, RvSpec, ViewGeometry};
use crate::scene::LidarPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Pinhole front camera. Camera axes: x right, y down, z along the optical
/// axis, which points along the mount yaw in the ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Rows removed from the top of the image before any processing.
    pub crop_top: usize,
    pub mount: Pose2,
    pub mount_height: f64,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        crop_top: usize,
        mount: Pose2,
        mount_height: f64,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || width == 0 || height == 0 {
            return Err(Error::InvalidArgument("camera needs positive focal lengths and size".into()));
        }
        if crop_top >= height {
            return Err(Error::InvalidArgument(format!("crop {crop_top} >= image height {height}")));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            crop_top,
            mount,
            mount_height,
        })
    }

    /// Square pixels, principal point at the image center.
    pub fn from_fov(
        width: usize,
        height: usize,
        hfov_deg: f64,
        crop_top: usize,
        mount: Pose2,
        mount_height: f64,
    ) -> Result<Self> {
        if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
            return Err(Error::InvalidArgument(format!("horizontal FOV {hfov_deg}° out of (0, 180)")));
        }
        let f = width as f64 / (2.0 * (0.5 * hfov_deg.to_radians()).tan());
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height, crop_top, mount, mount_height)
    }

    pub fn hfov_deg(&self) -> f64 {
        (2.0 * (self.width as f64 / (2.0 * self.fx)).atan()).to_degrees()
    }

    pub fn cropped_height(&self) -> usize {
        self.height - self.crop_top
    }

    /// Ego-frame point to camera coordinates (x right, y down, z forward).
    pub fn to_camera(&self, p: Point3) -> Point3 {
        let local = self.mount.inverse().apply2(p.xy());
        Point3::new(-local.y, self.mount_height - p.z, local.x)
    }

    /// Continuous (u, v) in full-image pixel coordinates; `None` behind the camera.
    pub fn project(&self, p: Point3) -> Option<(f64, f64)> {
        let c = self.to_camera(p);
        if c.z <= 1e-9 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// Ego-frame ray through full-image pixel position (row `v`, column `u`).
    pub fn pixel_ray(&self, v: f64, u: f64) -> (Point3, Point3) {
        let xc = (u - self.cx) / self.fx;
        let yc = (v - self.cy) / self.fy;
        let n = (xc * xc + yc * yc + 1.0).sqrt();
        let d = self.mount.rotate(crate::geometry::Point2::new(1.0 / n, -xc / n));
        let origin = Point3::new(self.mount.tx, self.mount.ty, self.mount_height);
        (origin, Point3::new(d.x, d.y, -yc / n))
    }
}

/// A camera feature lattice: the cropped image subsampled by `stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub camera: CameraModel,
    pub stride: usize,
}

impl CameraView {
    pub fn dims(&self) -> (usize, usize) {
        let s = self.stride.max(1);
        (self.camera.cropped_height().div_ceil(s), self.camera.width.div_ceil(s))
    }
}

/// BEV cell of an ego-frame point; `None` outside the grid's xy extent.
pub fn bev_cell_of(point: &Point3, grid: &GridSpec) -> Option<CellIndex> {
    grid.cell_xy(point.x, point.y).map(|(r, c)| CellIndex::new(r, c))
}

/// RV pixel of a return; same placement as the RV rasterizer.
pub fn rv_cell_of(point: &LidarPoint, rv: &RvSpec) -> Result<CellIndex> {
    rv.cell(point).map(|(r, c)| CellIndex::new(r, c))
}

/// Pixel of an ego-frame point in the cropped image, or `None` when it is
/// behind the camera, off the sensor, or inside the cropped top band.
pub fn camera_pixel_of(point: &Point3, cam: &CameraModel) -> Option<CellIndex> {
    let (u, v) = cam.project(*point)?;
    if !(u >= 0.0 && u < cam.width as f64 && v >= cam.crop_top as f64 && v < cam.height as f64) {
        return None;
    }
    Some(CellIndex::new(v.floor() as usize - cam.crop_top, u.floor() as usize))
}

/// Locates a LiDAR point on a view lattice.
pub trait Projector {
    fn project(&self, point: &LidarPoint) -> Option<CellIndex>;
    fn dims(&self) -> (usize, usize);
}

impl Projector for GridSpec {
    fn project(&self, point: &LidarPoint) -> Option<CellIndex> {
        bev_cell_of(&point.position(), self)
    }

    fn dims(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }
}

impl Projector for RvSpec {
    /// Invalid laser ids project nowhere.
    fn project(&self, point: &LidarPoint) -> Option<CellIndex> {
        rv_cell_of(point, self).ok()
    }

    fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

impl Projector for CameraView {
    fn project(&self, point: &LidarPoint) -> Option<CellIndex> {
        let s = self.stride.max(1);
        camera_pixel_of(&point.position(), &self.camera).map(|c| CellIndex::new(c.row / s, c.col / s))
    }

    fn dims(&self) -> (usize, usize) {
        CameraView::dims(self)
    }
}

impl Projector for ViewGeometry {
    fn project(&self, point: &LidarPoint) -> Option<CellIndex> {
        match self {
            ViewGeometry::Bev(g) => g.project(point),
            ViewGeometry::Rv(r) => r.project(point),
            ViewGeometry::Camera(c) => c.project(point),
        }
    }

    fn dims(&self) -> (usize, usize) {
        ViewGeometry::dims(self)
    }
}

/// Average-pooled point-based projection of `source` onto `target`.
///
/// For each target cell, the output is the mean of the source features under
/// every point that lands in that cell. Points with no source cell are skipped
/// entirely. Returns the projected features (zeros where no point landed) and
/// a one-channel validity map holding 1 for filled cells and −1 otherwise.
/// Sums run in f64 in ascending point order with a single division per cell.
pub fn project_features(
    source: &FeatureMap,
    points: &[LidarPoint],
    target: &ViewGeometry,
) -> Result<(FeatureMap, FeatureMap)> {
    let src_geom = source
        .geometry
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("source feature map carries no view geometry".into()))?;
    if src_geom.dims() != (source.height, source.width) {
        return Err(Error::ShapeMismatch(format!(
            "source map is {}x{} but its geometry is {:?}",
            source.height,
            source.width,
            src_geom.dims()
        )));
    }
    let (th, tw) = target.dims();
    let ch = source.channels;
    let mut acc = vec![0.0f64; th * tw * ch];
    let mut count = vec![0u32; th * tw];
    for p in points {
        let Some(t) = target.project(p) else { continue };
        let Some(s) = src_geom.project(p) else { continue };
        let slot = t.row * tw + t.col;
        count[slot] += 1;
        for (a, &v) in acc[slot * ch..(slot + 1) * ch].iter_mut().zip(source.cell(s.row, s.col)) {
            *a += v as f64;
        }
    }
    let mut out = FeatureMap::zeros(target.tag(), th, tw, ch);
    let mut valid = FeatureMap::filled(target.tag(), th, tw, 1, -1.0);
    for slot in 0..th * tw {
        let n = count[slot];
        if n == 0 {
            continue;
        }
        valid.data[slot] = 1.0;
        for k in 0..ch {
            out.data[slot * ch + k] = (acc[slot * ch + k] / n as f64) as f32;
        }
    }
    Ok((out.with_geometry(target.clone()), valid.with_geometry(target.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ViewTag;
    use std::f64::consts::TAU;

    fn grid() -> GridSpec {
        GridSpec::centered(30.0, 20.0, 3.2, 0.5, 0.5, 0.2, -0.2).unwrap()
    }

    fn lp(x: f64, y: f64, z: f64, laser_id: u32) -> LidarPoint {
        LidarPoint {
            x,
            y,
            z,
            range: (x * x + y * y + (z - 1.8).powi(2)).sqrt(),
            intensity: 0.5,
            azimuth: y.atan2(x).rem_euclid(TAU),
            laser_id,
        }
    }

    #[test]
    fn bev_origin_and_boundary() {
        let g = grid();
        let o = bev_cell_of(&Point3::new(0.0, 0.0, 0.0), &g).unwrap();
        assert_eq!(o, CellIndex::new(20, 20));
        assert!(bev_cell_of(&Point3::new(g.x_max() + 0.01, 0.0, 0.0), &g).is_none());
        assert!(bev_cell_of(&Point3::new(0.0, g.y_min - 0.01, 0.0), &g).is_none());
    }

    #[test]
    fn rv_cells() {
        let rv = RvSpec {
            rows: 2,
            cols: 2048,
            elevations: vec![0.0, -0.1],
        };
        let mut p = lp(1.0, 0.0, 0.0, 0);
        p.azimuth = 0.0;
        assert_eq!(rv_cell_of(&p, &rv).unwrap(), CellIndex::new(0, 0));
        p.azimuth = TAU - 1e-9;
        assert_eq!(rv_cell_of(&p, &rv).unwrap().col, 2047);
        p.laser_id = 2;
        assert!(rv_cell_of(&p, &rv).is_err());
    }

    #[test]
    fn camera_pixels() {
        let cam = CameraModel::from_fov(1920, 1200, 90.0, 438, Pose2::identity(), 1.6).unwrap();
        assert!((cam.hfov_deg() - 90.0).abs() < 1e-9);
        assert!((cam.fx - 960.0).abs() < 1e-9);
        let on_axis = camera_pixel_of(&Point3::new(20.0, 0.0, 1.6), &cam).unwrap();
        assert_eq!(on_axis, CellIndex::new(600 - 438, 960));
        assert!(camera_pixel_of(&Point3::new(-5.0, 0.0, 1.6), &cam).is_none());
        // lateral offset u to the right (−y) at depth d
        let (u, d) = (3.0, 25.0);
        let px = camera_pixel_of(&Point3::new(d, -u, 1.6), &cam).unwrap();
        assert!((px.col as f64 + 0.5 - (cam.cx + cam.fx * u / d)).abs() <= 0.5);
        // a point far above the horizon falls in the cropped band
        assert!(camera_pixel_of(&Point3::new(10.0, 0.0, 10.0), &cam).is_none());
    }

    #[test]
    fn pixel_ray_inverts_projection() {
        let cam = CameraModel::from_fov(640, 400, 70.0, 20, Pose2::new(1.5, 0.2, 0.1), 1.4).unwrap();
        let (o, d) = cam.pixel_ray(123.25, 401.5);
        let p = Point3::new(o.x + 17.0 * d.x, o.y + 17.0 * d.y, o.z + 17.0 * d.z);
        let (u, v) = cam.project(p).unwrap();
        assert!((u - 401.5).abs() < 1e-9 && (v - 123.25).abs() < 1e-9);
    }

    fn rv_source(values: &[f32]) -> (FeatureMap, RvSpec) {
        let rv = RvSpec {
            rows: 1,
            cols: values.len(),
            elevations: vec![0.0],
        };
        let fm = FeatureMap::from_vec(ViewTag::Rv, 1, values.len(), 1, values.to_vec())
            .unwrap()
            .with_geometry(ViewGeometry::Rv(rv.clone()));
        (fm, rv)
    }

    fn at_col(rv: &RvSpec, col: usize, x: f64, y: f64) -> LidarPoint {
        let mut p = lp(x, y, 0.5, 0);
        p.azimuth = (col as f64 + 0.5) * TAU / rv.cols as f64;
        p
    }

    #[test]
    fn single_point_copies() {
        let (src, rv) = rv_source(&[7.0, 2.0, 4.0, 9.0]);
        let g = grid();
        let p = at_col(&rv, 3, 1.2, 2.3);
        let (out, valid) = project_features(&src, &[p], &ViewGeometry::Bev(g)).unwrap();
        let c = bev_cell_of(&p.position(), &g).unwrap();
        assert_eq!(out.get(c.row, c.col, 0), 9.0);
        assert_eq!(valid.get(c.row, c.col, 0), 1.0);
        assert_eq!(valid.data.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(out.data.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn two_points_average() {
        let (src, rv) = rv_source(&[2.0, 4.0]);
        let g = grid();
        let pts = [at_col(&rv, 0, 1.1, 1.1), at_col(&rv, 1, 1.2, 1.2)];
        let (out, _) = project_features(&src, &pts, &ViewGeometry::Bev(g)).unwrap();
        let c = bev_cell_of(&pts[0].position(), &g).unwrap();
        assert_eq!(out.get(c.row, c.col, 0), 3.0);
    }

    #[test]
    fn missing_geometry_rejected() {
        let fm = FeatureMap::zeros(ViewTag::Rv, 1, 4, 1);
        assert!(project_features(&fm, &[], &ViewGeometry::Bev(grid())).is_err());
        let (mut src, _) = rv_source(&[1.0, 2.0]);
        src.width = 1;
        src.data.truncate(1);
        assert!(matches!(
            project_features(&src, &[], &ViewGeometry::Bev(grid())),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
