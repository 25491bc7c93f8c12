//! Bundle → network inputs → outputs → detections, with optional stage timing.

use crate::error::{Error, Result};
use crate::eval::{decode_detections, DecodeParams, DetBox, StageTimer};
use crate::io::{FrameBundle, Preset};
use crate::nn::{CellOutputs, FusionNet, NetInputs, ShapePlan};
use crate::projection::project_features;
use crate::raster::{build_rv_image, rasterize_map, stack_history_bev, FeatureMap, ViewGeometry, DEFAULT_LINE_WIDTH};
use crate::scene::{Image, LidarPoint};

/// Every network input derived from one bundle.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub lidar_bev: FeatureMap,
    pub map_raster: FeatureMap,
    pub rv_image: FeatureMap,
    /// Top rows already removed.
    pub image: Image,
    pub camera_view: ViewGeometry,
    /// Current sweep, ego frame.
    pub points: Vec<LidarPoint>,
}

impl PreparedFrame {
    pub fn inputs(&self, use_camera: bool) -> NetInputs<'_> {
        NetInputs {
            lidar_bev: &self.lidar_bev,
            map_raster: &self.map_raster,
            rv_image: &self.rv_image,
            camera: use_camera.then(|| (&self.image, self.camera_view.clone())),
            points: &self.points,
        }
    }

    /// Stage shapes for `net` on this frame.
    pub fn shape_plan(&self, net: &FusionNet) -> ShapePlan {
        ShapePlan::compute(
            &net.config,
            (self.lidar_bev.height, self.lidar_bev.width),
            (self.rv_image.height, self.rv_image.width),
            (self.image.height, self.image.width),
        )
    }
}

pub fn prepare_frame(bundle: &FrameBundle, preset: &Preset) -> Result<PreparedFrame> {
    bundle.validate(preset)?;
    let current = bundle.current_sweep();
    Ok(PreparedFrame {
        lidar_bev: stack_history_bev(&bundle.sweeps, &preset.grid, preset.history)?,
        map_raster: rasterize_map(&bundle.map, &preset.grid, DEFAULT_LINE_WIDTH),
        rv_image: build_rv_image(current, &preset.rv())?,
        image: bundle.image.crop_top(preset.camera.crop_top),
        camera_view: preset.camera_view(),
        points: current.points.clone(),
    })
}

pub fn run_forward(net: &FusionNet, frame: &PreparedFrame) -> Result<CellOutputs> {
    net.forward(&frame.inputs(net.config.use_camera))
}

/// Same computation as [`run_forward`] followed by decoding, split into
/// named stages: `camera`, `rv`, `rv_to_bev`, `bev`, `head`, `decode`.
pub fn timed_inference(
    net: &FusionNet,
    frame: &PreparedFrame,
    decode: &DecodeParams,
    timer: &mut StageTimer,
) -> Result<(CellOutputs, Vec<DetBox>)> {
    let grid = match &frame.lidar_bev.geometry {
        Some(g @ ViewGeometry::Bev(spec)) => (g.clone(), *spec),
        _ => return Err(Error::InvalidArgument("LiDAR stack carries no BEV geometry".into())),
    };
    let camera = if net.config.use_camera {
        let f = timer.stage("camera", || net.camera_net_forward(&frame.image))?;
        Some(f.with_geometry(frame.camera_view.clone()))
    } else {
        None
    };
    let rv = timer.stage("rv", || net.rv_branch_forward(&frame.rv_image, camera.as_ref(), &frame.points))?;
    let (rv_bev, rv_valid) = timer.stage("rv_to_bev", || project_features(&rv, &frame.points, &grid.0))?;
    let bev = timer.stage("bev", || net.bev_branch_forward(&frame.lidar_bev, &frame.map_raster))?;
    let out = timer.stage("head", || net.fuse_and_head_forward(&bev, &rv_bev, &rv_valid))?;
    let lattice = grid.1.lattice(net.config.output_stride);
    let dets = timer.stage("decode", || decode_detections(&out, &lattice, decode));
    Ok((out, dets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::time_pipeline;
    use crate::io::generate_bundle;

    #[test]
    fn timed_matches_plain_forward() {
        let preset = Preset::desk();
        let frame = prepare_frame(&generate_bundle(&preset, 1, 0).unwrap(), &preset).unwrap();
        let net = FusionNet::seeded(preset.net.clone(), 5).unwrap();
        let plain = run_forward(&net, &frame).unwrap();
        let mut timed = None;
        let report = time_pipeline(1, |t| {
            timed = Some(timed_inference(&net, &frame, &DecodeParams::default(), t)?.0);
            Ok(())
        })
        .unwrap();
        assert_eq!(timed.unwrap(), plain);
        assert_eq!(report.stages.len(), 6);
    }
}
