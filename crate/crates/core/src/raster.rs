//! Grid encodings of the scene: multi-sweep BEV occupancy, the 4-channel
//! range-view image, and the 7-channel HD-map raster.

use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, point_segment_distance, Point2, Point3, Pose2};
use crate::projection::CameraView;
use crate::scene::{LidarPoint, LidarSensorSpec, MapElement, MapGeometry, MapLayer, Sweep};

/// Number of cells covering `extent` at `step`, rounded up. A relative
/// tolerance keeps exact multiples (3.2 / 0.2) from gaining a phantom cell.
pub fn cell_count(extent: f64, step: f64) -> usize {
    let q = extent / step;
    (q - 1e-9 * q.abs().max(1.0)).ceil().max(0.0) as usize
}

/// Metric BEV voxel grid in the ego frame. Rows run along x, columns along y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub voxel_l: f64,
    pub voxel_w: f64,
    pub voxel_v: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub z_min: f64,
}

impl GridSpec {
    /// Grid with the SDV at 1/3 of the length from the rear edge, centered in y.
    pub fn centered(
        length: f64,
        width: f64,
        height: f64,
        voxel_l: f64,
        voxel_w: f64,
        voxel_v: f64,
        z_min: f64,
    ) -> Result<Self> {
        Self::with_origin(length, width, height, voxel_l, voxel_w, voxel_v, -length / 3.0, -width / 2.0, z_min)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_origin(
        length: f64,
        width: f64,
        height: f64,
        voxel_l: f64,
        voxel_w: f64,
        voxel_v: f64,
        x_min: f64,
        y_min: f64,
        z_min: f64,
    ) -> Result<Self> {
        let g = Self {
            length,
            width,
            height,
            voxel_l,
            voxel_w,
            voxel_v,
            x_min,
            y_min,
            z_min,
        };
        let all_pos = [length, width, height, voxel_l, voxel_w, voxel_v].iter().all(|v| *v > 0.0);
        if !all_pos {
            return Err(Error::InvalidArgument(format!("grid extents and voxel sizes must be positive: {g:?}")));
        }
        Ok(g)
    }

    pub fn rows(&self) -> usize {
        cell_count(self.length, self.voxel_l)
    }

    pub fn cols(&self) -> usize {
        cell_count(self.width, self.voxel_w)
    }

    pub fn layers(&self) -> usize {
        cell_count(self.height, self.voxel_v)
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.length
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.width
    }

    pub fn z_max(&self) -> f64 {
        self.z_min + self.height
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max() && y >= self.y_min && y < self.y_max()
    }

    /// Half-open floor indexing; `None` outside the extent.
    pub fn cell_xy(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.contains_xy(x, y) {
            return None;
        }
        let r = ((x - self.x_min) / self.voxel_l).floor() as usize;
        let c = ((y - self.y_min) / self.voxel_w).floor() as usize;
        (r < self.rows() && c < self.cols()).then_some((r, c))
    }

    pub fn voxel(&self, p: &Point3) -> Option<(usize, usize, usize)> {
        if !(p.z >= self.z_min && p.z < self.z_max()) {
            return None;
        }
        let (r, c) = self.cell_xy(p.x, p.y)?;
        let k = ((p.z - self.z_min) / self.voxel_v).floor() as usize;
        (k < self.layers()).then_some((r, c, k))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            self.x_min + (row as f64 + 0.5) * self.voxel_l,
            self.y_min + (col as f64 + 0.5) * self.voxel_w,
        )
    }

    /// The coarser lattice seen by a head at `stride`.
    pub fn lattice(&self, stride: usize) -> BevLattice {
        let s = stride.max(1);
        BevLattice {
            x_min: self.x_min,
            y_min: self.y_min,
            cell_l: self.voxel_l * s as f64,
            cell_w: self.voxel_w * s as f64,
            rows: self.rows().div_ceil(s),
            cols: self.cols().div_ceil(s),
        }
    }
}

/// 2D cell lattice anchored at the grid origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevLattice {
    pub x_min: f64,
    pub y_min: f64,
    pub cell_l: f64,
    pub cell_w: f64,
    pub rows: usize,
    pub cols: usize,
}

impl BevLattice {
    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            self.x_min + (row as f64 + 0.5) * self.cell_l,
            self.y_min + (col as f64 + 0.5) * self.cell_w,
        )
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        if p.x < self.x_min || p.y < self.y_min {
            return None;
        }
        let r = ((p.x - self.x_min) / self.cell_l).floor() as usize;
        let c = ((p.y - self.y_min) / self.cell_w).floor() as usize;
        (r < self.rows && c < self.cols).then_some((r, c))
    }
}

/// Range-view raster: one row per laser, `cols` azimuth bins over 360°.
#[derive(Debug, Clone, PartialEq)]
pub struct RvSpec {
    pub rows: usize,
    pub cols: usize,
    pub elevations: Vec<f64>,
}

impl RvSpec {
    pub fn from_sensor(sensor: &LidarSensorSpec) -> Self {
        Self {
            rows: sensor.beam_count(),
            cols: sensor.azimuth_bins,
            elevations: sensor.elevations.clone(),
        }
    }

    /// Column of an azimuth in [0, 2π). Bin edges get a 1e-3-bin nudge so that
    /// nominal firing azimuths `j·2π/cols` land in column `j` even after the
    /// f32 rounding of stored point records.
    pub fn column(&self, azimuth: f64) -> usize {
        let u = azimuth.rem_euclid(TAU) / TAU * self.cols as f64;
        ((u + 1e-3).floor() as usize).min(self.cols - 1)
    }

    pub fn cell(&self, point: &LidarPoint) -> Result<(usize, usize)> {
        let row = point.laser_id as usize;
        if row >= self.rows {
            return Err(Error::LaserIdOutOfRange {
                id: point.laser_id,
                rows: self.rows,
            });
        }
        Ok((row, self.column(point.azimuth)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewTag {
    Bev,
    Rv,
    Camera,
}

impl ViewTag {
    pub fn name(self) -> &'static str {
        match self {
            ViewTag::Bev => "bev",
            ViewTag::Rv => "rv",
            ViewTag::Camera => "camera",
        }
    }
}

impl fmt::Display for ViewTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Geometry of the lattice a feature map lives on, when it is known.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewGeometry {
    Bev(GridSpec),
    Rv(RvSpec),
    Camera(CameraView),
}

impl ViewGeometry {
    pub fn tag(&self) -> ViewTag {
        match self {
            ViewGeometry::Bev(_) => ViewTag::Bev,
            ViewGeometry::Rv(_) => ViewTag::Rv,
            ViewGeometry::Camera(_) => ViewTag::Camera,
        }
    }

    /// (height, width) of the lattice.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ViewGeometry::Bev(g) => (g.rows(), g.cols()),
            ViewGeometry::Rv(r) => (r.rows, r.cols),
            ViewGeometry::Camera(c) => c.dims(),
        }
    }
}

/// Dense H×W×C grid of f32 features, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub view: ViewTag,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub geometry: Option<ViewGeometry>,
}

impl FeatureMap {
    pub fn zeros(view: ViewTag, height: usize, width: usize, channels: usize) -> Self {
        Self::filled(view, height, width, channels, 0.0)
    }

    pub fn filled(view: ViewTag, height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            view,
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
            geometry: None,
        }
    }

    pub fn from_vec(view: ViewTag, height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature at flat index {i}")));
        }
        Ok(Self {
            view,
            height,
            width,
            channels,
            data,
            geometry: None,
        })
    }

    pub fn with_geometry(mut self, geometry: ViewGeometry) -> Self {
        self.geometry = Some(geometry);
        self
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let i = self.index(row, col, ch);
        self.data[i] = v;
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let i = self.index(row, col, 0);
        &self.data[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let i = self.index(row, col, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    pub fn channel(&self, ch: usize) -> Vec<f32> {
        self.data.iter().skip(ch).step_by(self.channels).copied().collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks maps of identical spatial size along the channel axis.
    pub fn concat_channels(parts: &[&FeatureMap]) -> Result<FeatureMap> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let (h, w) = (first.height, first.width);
        if let Some(p) = parts.iter().find(|p| p.height != h || p.width != w) {
            return Err(Error::ShapeMismatch(format!(
                "concat {}x{} with {}x{}",
                h, w, p.height, p.width
            )));
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(h * w * channels);
        for cell in 0..h * w {
            for p in parts {
                data.extend_from_slice(&p.data[cell * p.channels..(cell + 1) * p.channels]);
            }
        }
        Ok(FeatureMap {
            view: first.view,
            height: h,
            width: w,
            channels,
            data,
            geometry: first.geometry.clone(),
        })
    }

    /// Channel `ch` as a binary PGM. Values map linearly from [−1, 1] to [0, 255], clamped.
    pub fn channel_pgm(&self, ch: usize) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().skip(ch).step_by(self.channels).map(|&v| {
            let g = ((v as f64 + 1.0) * 127.5).round();
            g.clamp(0.0, 255.0) as u8
        }));
        out
    }

    /// Writes `<prefix>_<channel>.pgm` for every channel and returns the paths.
    pub fn dump_pgm(&self, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        (0..self.channels)
            .map(|ch| {
                let path = dir.join(format!("{prefix}_{ch}.pgm"));
                std::fs::write(&path, self.channel_pgm(ch))?;
                Ok(path)
            })
            .collect()
    }
}

/// Binary occupancy of one sweep (points already in the grid's frame).
/// Output has ⌈V/Δ_V⌉ channels.
pub fn voxelize_sweep_bev(sweep: &Sweep, grid: &GridSpec) -> FeatureMap {
    let mut fm = FeatureMap::zeros(ViewTag::Bev, grid.rows(), grid.cols(), grid.layers());
    occupy(&mut fm, grid, sweep.points.iter().map(LidarPoint::position), 0);
    fm.with_geometry(ViewGeometry::Bev(*grid))
}

fn occupy(fm: &mut FeatureMap, grid: &GridSpec, pts: impl Iterator<Item = Point3>, channel_offset: usize) {
    for p in pts {
        if let Some((r, c, k)) = grid.voxel(&p) {
            fm.set(r, c, channel_offset + k, 1.0);
        }
    }
}

/// Ego-motion compensates `sweeps` (oldest first) into the frame of the last
/// one and stacks their occupancy: T·⌈V/Δ_V⌉ channels, current sweep last.
pub fn stack_history_bev(sweeps: &[Sweep], grid: &GridSpec, history: usize) -> Result<FeatureMap> {
    if sweeps.len() != history || history == 0 {
        return Err(Error::InvalidArgument(format!(
            "expected {history} sweeps, got {}",
            sweeps.len()
        )));
    }
    let current = sweeps[history - 1].ego_pose;
    let to_current = current.inverse();
    let nz = grid.layers();
    let mut fm = FeatureMap::zeros(ViewTag::Bev, grid.rows(), grid.cols(), history * nz);
    for (k, sweep) in sweeps.iter().enumerate() {
        let pose: Pose2 = to_current.compose(&sweep.ego_pose);
        occupy(&mut fm, grid, sweep.points.iter().map(|p| pose.apply(p.position())), k * nz);
    }
    Ok(fm.with_geometry(ViewGeometry::Bev(*grid)))
}

/// Default total width of rasterized polylines, meters.
pub const DEFAULT_LINE_WIDTH: f64 = 0.2;

/// One binary channel per map layer: a cell is set when its center lies in a
/// polygon, or within `line_width / 2` of a polyline.
pub fn rasterize_map(map: &MapGeometry, grid: &GridSpec, line_width: f64) -> FeatureMap {
    let (rows, cols) = (grid.rows(), grid.cols());
    let mut fm = FeatureMap::zeros(ViewTag::Bev, rows, cols, MapLayer::ALL.len());
    let half = 0.5 * line_width;
    for (layer, elems) in map.layers() {
        let ch = layer.index();
        for e in elems {
            let pts = e.points();
            if pts.is_empty() {
                continue;
            }
            let pad = if matches!(e, MapElement::Polyline(_)) { half } else { 0.0 };
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in pts {
                x0 = x0.min(p.x - pad);
                x1 = x1.max(p.x + pad);
                y0 = y0.min(p.y - pad);
                y1 = y1.max(p.y + pad);
            }
            let r0 = (((x0 - grid.x_min) / grid.voxel_l).floor() - 1.0).max(0.0) as usize;
            let r1 = (((x1 - grid.x_min) / grid.voxel_l).ceil() + 1.0).clamp(0.0, rows as f64) as usize;
            let c0 = (((y0 - grid.y_min) / grid.voxel_w).floor() - 1.0).max(0.0) as usize;
            let c1 = (((y1 - grid.y_min) / grid.voxel_w).ceil() + 1.0).clamp(0.0, cols as f64) as usize;
            for r in r0..r1 {
                for c in c0..c1 {
                    let q = grid.cell_center(r, c);
                    let hit = match e {
                        MapElement::Polygon(poly) => point_in_polygon(q, poly),
                        MapElement::Polyline(line) => {
                            if line.len() == 1 {
                                q.dist(&line[0]) <= half
                            } else {
                                line.windows(2).any(|s| point_segment_distance(q, s[0], s[1]) <= half)
                            }
                        }
                    };
                    if hit {
                        fm.set(r, c, ch, 1.0);
                    }
                }
            }
        }
    }
    fm.with_geometry(ViewGeometry::Bev(*grid))
}

/// Current sweep only. Channels (r, z, e, valid); empty pixels are (−1, −1, −1, 0).
/// On a cell collision the nearest return wins, earlier point index on ties.
pub fn build_rv_image(sweep: &Sweep, rv: &RvSpec) -> Result<FeatureMap> {
    let mut fm = FeatureMap::zeros(ViewTag::Rv, rv.rows, rv.cols, 4);
    for cell in fm.data.chunks_exact_mut(4) {
        cell.copy_from_slice(&[-1.0, -1.0, -1.0, 0.0]);
    }
    let mut best = vec![f64::INFINITY; rv.rows * rv.cols];
    for p in &sweep.points {
        let (r, c) = rv.cell(p)?;
        let slot = r * rv.cols + c;
        if p.range < best[slot] {
            best[slot] = p.range;
            fm.cell_mut(r, c)
                .copy_from_slice(&[p.range as f32, p.z as f32, p.intensity as f32, 1.0]);
        }
    }
    Ok(fm.with_geometry(ViewGeometry::Rv(rv.clone())))
}
