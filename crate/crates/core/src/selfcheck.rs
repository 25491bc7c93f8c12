//! Oracle and invariant suites behind `mvfusion selfcheck`.
//!
//! Every check is seeded, so two runs write byte-identical reports and
//! artifacts. Reports carry no timings for the same reason.

use std::f64::consts::{PI, TAU};
use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::eval::{
    average_precision, decode_detections, displacement_error, filter_camera_fov, match_detections,
    operating_threshold_for_recall, rotated_iou, DecodeParams, DetBox, EvalConfig, Evaluator, MatchEntry, MatchResult,
    RangeBand,
};
use crate::geometry::{normalize_angle, Pose2, RotatedBox2D};
use crate::io::{generate_bundle, FrameBundle, Preset, PresetName, RunConfig};
use crate::nn::{conv2d_forward, ConvLayerSpec, FusionNet, NetworkWeights, OutputLayout};
use crate::objectives::{encode_targets, fit_outputs, loss_gradients, total_loss, LossParams};
use crate::oracle::{eq1_brute_force, finite_difference_gradient, monte_carlo_iou, naive_conv2d};
use crate::pipeline::{prepare_frame, run_forward};
use crate::projection::{project_features, CameraModel, CameraView};
use crate::raster::{FeatureMap, GridSpec, RvSpec, ViewGeometry, ViewTag};
use crate::scene::{build_scene, scene_labels, ActorClass, ActorLabel, LabelSet, LidarPoint, SceneConfig, Waypoint};

/// Result of one suite. `failures` name each violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub details: Vec<(String, String)>,
    pub failures: Vec<String>,
}

impl CheckOutcome {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            details: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn value(&mut self, key: &str, v: impl Display) {
        self.details.push((key.to_string(), v.to_string()));
    }

    fn require(&mut self, ok: bool, invariant: impl Into<String>) {
        if !ok {
            self.failures.push(invariant.into());
        }
    }
}

/// Where suites drop their artifacts. Without a directory nothing is written.
#[derive(Debug, Default)]
pub struct Artifacts {
    dir: Option<PathBuf>,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            written: Vec::new(),
        })
    }

    pub fn discard() -> Self {
        Self::default()
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            self.written.push(path);
        }
        Ok(())
    }
}

type CheckFn = fn(&mut Artifacts) -> Result<CheckOutcome>;

/// All suites in run order.
pub const CHECKS: [(&str, CheckFn); 9] = [
    ("shape_fidelity", shape_fidelity),
    ("projection_oracle", projection_oracle),
    ("conv_oracle", conv_oracle),
    ("gradient_oracle", gradient_oracle),
    ("loss_round_trip", loss_round_trip),
    ("rotated_iou", rotated_iou_suite),
    ("metrics_protocol", metrics_protocol),
    ("ablation_plumbing", ablation_plumbing),
    ("bundle_io", bundle_io),
];

pub fn run_check(name: &str, artifacts: &mut Artifacts) -> Result<CheckOutcome> {
    let (_, f) = CHECKS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| crate::Error::InvalidArgument(format!("unknown check `{name}`")))?;
    f(artifacts)
}

#[derive(Debug, Clone)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckOutcome>,
    pub artifacts: Vec<PathBuf>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn to_report(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "[{}]", c.name);
            let _ = writeln!(s, "status = {}", if c.passed() { "pass" } else { "fail" });
            for (k, v) in &c.details {
                let _ = writeln!(s, "{k} = {v}");
            }
            for f in &c.failures {
                let _ = writeln!(s, "failed = {f}");
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every suite, writing artifacts and `selfcheck_report.txt` into `dir`.
/// An error inside a suite is recorded as that suite's failure.
pub fn run_selfcheck(dir: &Path) -> Result<SelfcheckReport> {
    let mut artifacts = Artifacts::in_dir(dir)?;
    let mut checks = Vec::new();
    for (name, f) in CHECKS {
        let outcome = f(&mut artifacts).unwrap_or_else(|e| {
            let mut o = CheckOutcome::new(name);
            o.failures.push(format!("error: {e}"));
            o
        });
        checks.push(outcome);
    }
    let mut report = SelfcheckReport {
        checks,
        artifacts: Vec::new(),
    };
    artifacts.write("selfcheck_report.txt", report.to_report().as_bytes())?;
    report.artifacts = artifacts.written;
    Ok(report)
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5e1f_c4ec_0000_0000 ^ tag)
}

/// BEV stack and RV raster shapes of both full-size configurations, checked
/// against the shape formula evaluated on the published sensor values.
pub fn shape_fidelity(artifacts: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("shape_fidelity");
    // (preset, BEV stack, RV rows, RV cols, image rows after crop, image cols)
    let published = [
        (PresetName::Atg4d, (938, 625, 160), 64, 2048, 1200 - 438, 1920),
        (PresetName::Nuscenes, (800, 800, 400), 32, 2048, 900, 1600),
    ];
    for (name, expected, rv_rows, rv_cols, img_rows, img_cols) in published {
        let preset = Preset::get(name);
        let frame = prepare_frame(&generate_bundle(&preset, 0, 0)?, &preset)?;
        let got = frame.lidar_bev.shape();
        o.value(&format!("{name}.bev_shape"), format!("{}x{}x{}", got.0, got.1, got.2));
        o.require(got == expected, format!("{name} BEV stack is {got:?}, formula gives {expected:?}"));
        o.require(
            preset.net.bev_in == expected.2,
            format!("{name} network expects {} BEV channels", preset.net.bev_in),
        );
        let rv = frame.rv_image.shape();
        o.value(&format!("{name}.rv_shape"), format!("{}x{}x{}", rv.1, rv.0, rv.2));
        o.require(rv == (rv_rows, rv_cols, 4), format!("{name} RV image is {rv:?}"));
        let map = frame.map_raster.shape();
        o.require(map == (expected.0, expected.1, 7), format!("{name} map raster is {map:?}"));
        let img = (frame.image.height, frame.image.width);
        o.require(img == (img_rows, img_cols), format!("{name} cropped image is {img:?}"));
        let occupied = frame.lidar_bev.data.iter().filter(|&&x| x != 0.0).count();
        o.value(&format!("{name}.occupied_voxels"), occupied);
        o.require(occupied > 0, format!("{name} BEV stack is empty"));
    }
    // a full forward pass at desk scale must follow the closed-form shape plan
    let preset = Preset::desk();
    let frame = prepare_frame(&generate_bundle(&preset, 0, 0)?, &preset)?;
    let net = FusionNet::seeded(preset.net.clone(), 0)?;
    let plan = frame.shape_plan(&net);
    let out = run_forward(&net, &frame)?;
    let got = (out.rows, out.cols, out.channels());
    o.value("desk.output_shape", format!("{}x{}x{}", got.0, got.1, got.2));
    o.require(got == plan.outputs, format!("desk outputs {got:?} differ from plan {:?}", plan.outputs));
    artifacts.write("desk_frame0.pgm", &frame.lidar_bev.channel_pgm(frame.lidar_bev.channels - 1))?;
    Ok(o)
}

fn random_features<R: Rng>(rng: &mut R, view: &ViewGeometry, channels: usize) -> FeatureMap {
    let (h, w) = view.dims();
    let data = (0..h * w * channels).map(|_| rng.gen_range(-4.0f32..4.0)).collect();
    FeatureMap::from_vec(view.tag(), h, w, channels, data)
        .expect("sized to the view")
        .with_geometry(view.clone())
}

fn random_points<R: Rng>(rng: &mut R, n: usize, reach: f64, rows: usize) -> Vec<LidarPoint> {
    (0..n)
        .map(|_| {
            let (x, y, z) = (
                rng.gen_range(-reach..reach),
                rng.gen_range(-reach..reach),
                rng.gen_range(-1.0..4.0),
            );
            LidarPoint {
                x,
                y,
                z,
                range: (x * x + y * y + z * z).sqrt(),
                intensity: rng.gen_range(0.0..1.0),
                azimuth: y.atan2(x).rem_euclid(TAU),
                // one row past the end stands for a malformed laser id
                laser_id: rng.gen_range(0..=rows) as u32,
            }
        })
        .collect()
}

fn bit_equal(a: &FeatureMap, b: &FeatureMap) -> bool {
    a.shape() == b.shape() && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Pooled projection against the literal double loop, camera→RV and RV→BEV.
pub fn projection_oracle(_: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("projection_oracle");
    let mut rng = rng(2);
    let configs = 100;
    let (mut filled, mut max_points) = (0usize, 0usize);
    for i in 0..configs {
        let n = if i == 0 { 10_000 } else { rng.gen_range(1..=10_000) };
        max_points = max_points.max(n);
        let rv = {
            let rows = rng.gen_range(2..=8);
            RvSpec {
                rows,
                cols: rng.gen_range(16..=256),
                elevations: (0..rows).map(|r| -(r as f64) * 0.03).collect(),
            }
        };
        let width = rng.gen_range(32..=160);
        let height = rng.gen_range(24..=120);
        let camera = CameraModel::from_fov(
            width,
            height,
            rng.gen_range(50.0..120.0),
            rng.gen_range(0..height / 3),
            Pose2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)),
            rng.gen_range(1.0..2.0),
        )?;
        let cam_view = ViewGeometry::Camera(CameraView {
            camera,
            stride: rng.gen_range(1..=8),
        });
        let step = rng.gen_range(0.5..2.0);
        let grid = GridSpec::centered(
            rng.gen_range(10.0..40.0),
            rng.gen_range(10.0..40.0),
            3.2,
            step,
            step,
            0.2,
            -0.2,
        )?;
        let points = random_points(&mut rng, n, 25.0, rv.rows);
        let rv_view = ViewGeometry::Rv(rv);
        let bev_view = ViewGeometry::Bev(grid);
        let channels = rng.gen_range(1..=8);
        for (src_view, dst_view) in [(&cam_view, &rv_view), (&rv_view, &bev_view)] {
            let src = random_features(&mut rng, src_view, channels);
            let (fast, fast_valid) = project_features(&src, &points, dst_view)?;
            let (slow, slow_valid) = eq1_brute_force(&src, src_view, &points, dst_view);
            filled += slow_valid.data.iter().filter(|&&v| v > 0.0).count();
            o.require(
                bit_equal(&fast, &slow) && bit_equal(&fast_valid, &slow_valid),
                format!(
                    "config {i}: {} -> {} projection differs from the brute-force pooling",
                    src_view.tag(),
                    dst_view.tag()
                ),
            );
        }
    }
    o.value("configs", configs);
    o.value("max_points", max_points);
    o.value("filled_cells", filled);
    Ok(o)
}

/// Fast convolution against the definition on random layers.
pub fn conv_oracle(_: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("conv_oracle");
    let mut rng = rng(3);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let spec = ConvLayerSpec {
            in_channels: rng.gen_range(1..=8),
            out_channels: rng.gen_range(1..=8),
            stride: (rng.gen_range(1..=2), rng.gen_range(1..=2)),
            relu: rng.gen_bool(0.5),
        };
        let (h, w) = (rng.gen_range(1..=24), rng.gen_range(1..=24));
        let data = (0..h * w * spec.in_channels)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-2.0f32..2.0) })
            .collect();
        let input = FeatureMap::from_vec(ViewTag::Bev, h, w, spec.in_channels, data)?;
        let kernel: Vec<f32> = (0..spec.kernel_len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let bias: Vec<f32> = (0..spec.out_channels).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
        let fast = conv2d_forward(&input, &spec, &kernel, &bias)?;
        let slow = naive_conv2d(&input, &spec, &kernel, &bias);
        o.require(fast.shape() == slow.shape(), format!("layer {i}: output shape differs"));
        let err = fast
            .data
            .iter()
            .zip(&slow.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
    }
    o.value("layers", 50);
    o.value("max_abs_error", format!("{worst:e}"));
    o.require(worst < 1e-10, format!("conv max abs error {worst:e} >= 1e-10"));
    Ok(o)
}

fn random_label<R: Rng>(rng: &mut R, id: u32, half_l: f64, half_w: f64, horizon: usize) -> ActorLabel {
    let class = ActorClass::ALL[rng.gen_range(0..3)];
    let (l0, l1) = class.length_range();
    let (w0, w1) = class.width_range();
    let (cx, cy) = (rng.gen_range(-half_l..half_l), rng.gen_range(-half_w..half_w));
    let heading = rng.gen_range(-PI..PI);
    let (mut x, mut y, mut th) = (cx, cy, heading);
    let waypoints = (1..=horizon)
        .map(|_| {
            th = normalize_angle(th + rng.gen_range(-0.05..0.05));
            x += 0.4 * th.cos();
            y += 0.4 * th.sin();
            Waypoint {
                cx: x,
                cy: y,
                heading: th,
            }
        })
        .collect();
    ActorLabel {
        id,
        class,
        bbox: RotatedBox2D::new(cx, cy, rng.gen_range(l0..l1), rng.gen_range(w0..w1), heading).expect("positive size"),
        height: 1.5,
        waypoints,
    }
}

/// A perturbation of magnitude in [0.02, 0.9] or [1.1, 3], away from the
/// smooth-ℓ1 kink and from zero.
fn regression_delta<R: Rng>(rng: &mut R) -> f64 {
    let m = if rng.gen_bool(0.7) { rng.gen_range(0.02..0.9) } else { rng.gen_range(1.1..3.0) };
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Analytic loss gradients against central differences on random frames.
pub fn gradient_oracle(_: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("gradient_oracle");
    let mut rng = rng(4);
    let params = LossParams::default();
    let grid = GridSpec::centered(16.0, 12.0, 3.2, 1.0, 1.0, 0.2, -0.2)?;
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for frame in 0..10 {
        let n = rng.gen_range(1..=3);
        let labels = LabelSet {
            timestamp: 0.0,
            horizon: params.horizon,
            actors: (0..n).map(|i| random_label(&mut rng, i, 5.0, 4.0, params.horizon)).collect(),
        };
        let targets = encode_targets(&labels, &grid, 4, params.horizon)?;
        let mut outputs = targets.ideal_outputs(0.0, 0.0);
        let per = outputs.layout().per_class();
        for block in outputs.data.chunks_exact_mut(per) {
            block[OutputLayout::P] = rng.gen_range(0.02..0.98);
            for v in &mut block[1..] {
                *v += regression_delta(&mut rng);
            }
        }
        let analytic = loss_gradients(&outputs, &targets, &params)?;
        let numeric = finite_difference_gradient(&outputs, &targets, &params, 1e-4)?;
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let scale = a.abs().max(n.abs());
            let rel = if scale < 1e-12 { 0.0 } else { (a - n).abs() / scale };
            checked += 1;
            if rel > worst {
                worst = rel;
            }
            if rel >= 1e-4 {
                o.require(false, format!("frame {frame} channel {i}: analytic {a} vs numeric {n}"));
                break;
            }
        }
    }
    o.value("frames", 10);
    o.value("partials", checked);
    o.value("max_rel_error", format!("{worst:e}"));
    Ok(o)
}

/// Σ_{h=0}^{H} λ^h evaluated term by term.
pub fn decay_sum(lambda: f64, horizon: usize) -> f64 {
    (0..=horizon).map(|h| lambda.powi(h as i32)).sum()
}

/// Center term of one fg cell whose predicted x-center is off by `error` at
/// every waypoint, everything else exact.
pub fn constant_center_error_term(error: f64, params: &LossParams) -> Result<f64> {
    let grid = GridSpec::centered(8.0, 8.0, 3.2, 1.0, 1.0, 0.2, -0.2)?;
    let heading = 0.0;
    let label = ActorLabel {
        id: 1,
        class: ActorClass::Pedestrian,
        bbox: RotatedBox2D::new(0.1, 0.1, 0.5, 0.5, heading)?,
        height: 1.7,
        waypoints: (1..=params.horizon)
            .map(|h| Waypoint {
                cx: 0.1 + 0.1 * h as f64,
                cy: 0.1,
                heading,
            })
            .collect(),
    };
    let labels = LabelSet {
        timestamp: 0.0,
        horizon: params.horizon,
        actors: vec![label],
    };
    let targets = encode_targets(&labels, &grid, 1, params.horizon)?;
    let mut outputs = targets.ideal_outputs(0.0, 0.0);
    let layout = outputs.layout();
    let k = ActorClass::Pedestrian.index();
    for (r, c) in targets.fg_cells(k) {
        let b = outputs.block_mut(r, c, k);
        for h in 0..=params.horizon {
            b[layout.center_x(h)] += error;
        }
    }
    let loss = total_loss(&outputs, &targets, params)?;
    Ok(loss.classes[k].center.iter().sum())
}

fn three_actor_labels(horizon: usize) -> Result<(SceneConfig, LabelSet)> {
    let preset = Preset::desk();
    let config = SceneConfig {
        vehicles: 1,
        pedestrians: 1,
        bicyclists: 1,
        ..preset.scene.clone()
    };
    let scene = build_scene(&config, 11)?;
    Ok((config, scene_labels(&scene, preset.reference_time(), horizon)?))
}

/// Detections matched one-to-one to labels, per class, at the class IoU.
fn class_ap(dets: &[DetBox], labels: &[ActorLabel], class: ActorClass) -> (f64, MatchResult) {
    let d: Vec<_> = dets.iter().filter(|d| d.class == class).map(|d| (d.score, d.bbox)).collect();
    let g: Vec<_> = labels.iter().filter(|l| l.class == class).map(|l| l.bbox).collect();
    let m = match_detections(&d, &g, class.iou_threshold());
    (average_precision(std::slice::from_ref(&m)), m)
}

/// Targets → fitted outputs → decoded boxes recovers the labels; plus the
/// geometric-decay closed form of the center term.
pub fn loss_round_trip(artifacts: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("loss_round_trip");
    let params = LossParams::default();
    let preset = Preset::desk();
    let (_, labels) = three_actor_labels(params.horizon)?;
    let targets = encode_targets(&labels, &preset.grid, preset.output_stride, params.horizon)?;
    let fit = fit_outputs(&targets, &params, 1000, 1.0)?;
    o.value("fit_steps", fit.history.len() - 1);
    o.value("loss_start", format!("{:.6}", fit.history[0]));
    o.value("loss_end", format!("{:.6}", fit.history.last().unwrap()));
    let lattice = preset.grid.lattice(preset.output_stride);
    let dets = decode_detections(&fit.outputs, &lattice, &DecodeParams::default());
    let half_cell = 0.5 * lattice.cell_l.min(lattice.cell_w);
    for class in ActorClass::ALL {
        let (ap, m) = class_ap(&dets, &labels.actors, class);
        let present = labels.actors.iter().any(|l| l.class == class);
        o.value(&format!("{class}.ap"), format!("{ap:.6}"));
        if present {
            o.require(ap == 1.0, format!("{class} AP {ap} != 1"));
        }
        let cls_dets: Vec<&DetBox> = {
            let mut v: Vec<&DetBox> = dets.iter().filter(|d| d.class == class).collect();
            v.sort_by(|a, b| b.score.total_cmp(&a.score));
            v
        };
        let cls_labels: Vec<&ActorLabel> = labels.actors.iter().filter(|l| l.class == class).collect();
        for e in m.entries.iter().filter(|e: &&MatchEntry| e.is_tp()) {
            let (d, g) = (cls_dets[e.det], cls_labels[e.gt.unwrap()]);
            let center_err = (d.bbox.cx - g.bbox.cx).hypot(d.bbox.cy - g.bbox.cy);
            let heading_err = normalize_angle(d.bbox.heading - g.bbox.heading).abs().to_degrees();
            o.value(&format!("{class}.center_error_m"), format!("{center_err:.6}"));
            o.value(&format!("{class}.heading_error_deg"), format!("{heading_err:.6}"));
            o.require(center_err <= half_cell, format!("{class} center error {center_err} m > half a cell"));
            o.require(heading_err <= 1.0, format!("{class} heading error {heading_err}° > 1°"));
        }
        let recovered = m.tp();
        o.require(
            recovered == cls_labels.len(),
            format!("{class}: {recovered} of {} boxes recovered", cls_labels.len()),
        );
    }
    let term = constant_center_error_term(0.3, &params)?;
    let closed = 0.045 * decay_sum(params.lambda, params.horizon);
    o.value("center_term_0.3m", format!("{term:.6}"));
    o.value("center_term_closed_form", format!("{closed:.6}"));
    o.require((term - closed).abs() < 1e-9, format!("center term {term} vs geometric sum {closed}"));
    artifacts.write("fit_history.txt", fit.history.iter().map(|l| format!("{l:.9}\n")).collect::<String>().as_bytes())?;
    Ok(o)
}

fn random_box<R: Rng>(rng: &mut R) -> RotatedBox2D {
    RotatedBox2D::new(
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-1.5..1.5),
        rng.gen_range(0.5..5.0),
        rng.gen_range(0.3..2.5),
        rng.gen_range(-PI..PI),
    )
    .expect("positive size")
}

/// Closed-form, Monte-Carlo and symmetry checks of rotated IoU.
pub fn rotated_iou_suite(_: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("rotated_iou");
    let a = RotatedBox2D::new(0.0, 0.0, 1.0, 1.0, 0.0)?;
    let b = RotatedBox2D::new(0.5, 0.0, 1.0, 1.0, 0.0)?;
    let third = rotated_iou(&a, &b);
    o.value("offset_squares", format!("{third:.12}"));
    o.require((third - 1.0 / 3.0).abs() < 1e-12, format!("offset squares IoU {third} != 1/3"));
    let mut rng = rng(6);
    let (mut mc_worst, mut sym_worst, mut rigid_worst) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let iou = rotated_iou(&a, &b);
        mc_worst = mc_worst.max((iou - monte_carlo_iou(&a, &b, 1_000_000, &mut rng)).abs());
        sym_worst = sym_worst.max((iou - rotated_iou(&b, &a)).abs());
        let pose = Pose2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-PI..PI));
        rigid_worst = rigid_worst.max((iou - rotated_iou(&a.transformed(&pose), &b.transformed(&pose))).abs());
    }
    o.value("monte_carlo_max_abs_diff", format!("{mc_worst:.6}"));
    o.value("symmetry_max_abs_diff", format!("{sym_worst:e}"));
    o.value("rigid_motion_max_abs_diff", format!("{rigid_worst:e}"));
    o.require(mc_worst < 0.01, format!("IoU differs from Monte-Carlo by {mc_worst}"));
    o.require(sym_worst < 1e-9, format!("IoU asymmetric by {sym_worst}"));
    o.require(rigid_worst < 1e-9, format!("IoU changes under rigid motion by {rigid_worst}"));
    Ok(o)
}

fn shifted_label(id: u32, x: f64, shift: f64, horizon: usize) -> (ActorLabel, DetBox) {
    let label = ActorLabel {
        id,
        class: ActorClass::Vehicle,
        bbox: RotatedBox2D::new(x, 5.0, 4.0, 2.0, 0.0).expect("positive size"),
        height: 1.5,
        waypoints: (1..=horizon)
            .map(|h| Waypoint {
                cx: x + h as f64,
                cy: 5.0,
                heading: 0.0,
            })
            .collect(),
    };
    let mut trajectory = label.waypoints.clone();
    trajectory[horizon - 1].cx += shift;
    let det = DetBox {
        class: label.class,
        score: 0.9,
        bbox: label.bbox,
        trajectory,
        cell: (0, id as usize),
    };
    (label, det)
}

/// Hand-enumerated AP, operating threshold and displacement error cases.
pub fn metrics_protocol(_: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("metrics_protocol");
    let gt = |x: f64| RotatedBox2D::new(x, 0.0, 4.0, 2.0, 0.0).expect("positive size");
    let miss = RotatedBox2D::new(100.0, 0.0, 4.0, 2.0, 0.0)?;
    // ranked TP, FP, TP over two ground truths
    let m = match_detections(&[(0.9, gt(0.0)), (0.8, miss), (0.7, gt(10.0))], &[gt(0.0), gt(10.0)], 0.7);
    let ap = average_precision(std::slice::from_ref(&m));
    let hand = 0.5 * 1.0 + 0.5 * (2.0 / 3.0);
    o.value("ap_tp_fp_tp", format!("{ap:.9}"));
    o.require((ap - hand).abs() < 1e-9, format!("AP {ap} != {hand}"));
    // five TPs scored 0.9..0.5 over five ground truths: recall 0.8 at 0.6
    let gts: Vec<_> = (0..5).map(|i| gt(10.0 * i as f64)).collect();
    let dets: Vec<_> = (0..5).map(|i| (0.9 - 0.1 * i as f64, gts[i])).collect();
    let thr = operating_threshold_for_recall(&[match_detections(&dets, &gts, 0.7)], 0.8)?;
    o.value("threshold_recall_0.8", format!("{thr:.6}"));
    o.require((thr - 0.6).abs() < 1e-12, format!("operating threshold {thr} != 0.6"));
    // DE through the evaluator: every TP 1 m off at the last waypoint
    let horizon = 30;
    let (labels, dets): (Vec<_>, Vec<_>) = (0..3).map(|i| shifted_label(i, 5.0 + 15.0 * i as f64, 1.0, horizon)).unzip();
    let mut ev = Evaluator::new(EvalConfig {
        camera: None,
        bands: vec![RangeBand::new(0.0, 75.0)],
        recall_target: 0.8,
        de_horizon: horizon,
    });
    ev.add_frame(dets, labels);
    let de = ev.report().slices[0].de_cm;
    o.value("de_constant_1m", de.map_or("n/a".into(), |d| format!("{d:.6}")));
    o.require(de == Some(100.0), format!("constant 1 m offset gives DE {de:?} cm"));
    let mixed = displacement_error(&[((0.5, 0.0), (0.0, 0.0)), ((0.0, 1.5), (0.0, 0.0))]);
    o.value("de_mixed", mixed.map_or("n/a".into(), |d| format!("{d:.6}")));
    o.require(mixed == Some(100.0), format!("mixed offsets give DE {mixed:?} cm"));
    Ok(o)
}

/// Keys of a `key = value` report with values dropped.
pub fn report_schema(report: &str) -> Vec<String> {
    report
        .lines()
        .map(|l| l.split_once(" = ").map_or(l, |(k, _)| k).to_string())
        .collect()
}

/// L-MV and LC-MV end to end on desk frames, plus rear-actor exclusion by
/// the 90° camera across generated scenes.
pub fn ablation_plumbing(artifacts: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("ablation_plumbing");
    let mut reports = Vec::new();
    for use_camera in [false, true] {
        let run = RunConfig {
            use_camera,
            frames: 2,
            ..RunConfig::default()
        };
        let preset = run.preset();
        let net = FusionNet::new(preset.net.clone(), run.load_weights()?)?;
        let mut ev = Evaluator::new(run.eval_config());
        let tag = if use_camera { "lc_mv" } else { "l_mv" };
        for frame in 0..run.frames {
            let bundle = generate_bundle(&preset, run.seed, frame)?;
            let prepared = prepare_frame(&bundle, &preset)?;
            let plan = prepared.shape_plan(&net);
            let trace = net.rv_branch_trace(
                &prepared.rv_image,
                match use_camera {
                    true => Some(net.camera_net_forward(&prepared.image)?.with_geometry(prepared.camera_view.clone())),
                    false => None,
                }
                .as_ref(),
                &prepared.points,
            )?;
            o.require(trace.concat.shape() == plan.rv_concat, format!("{tag}: RV concat shape off plan"));
            o.require(trace.output.shape() == plan.rv_features, format!("{tag}: RV output shape off plan"));
            let out = run_forward(&net, &prepared)?;
            o.require(
                (out.rows, out.cols, out.channels()) == plan.outputs,
                format!("{tag}: output shape off plan"),
            );
            o.require(out.data.iter().all(|v| v.is_finite()), format!("{tag}: non-finite outputs"));
            let lattice = preset.grid.lattice(preset.output_stride);
            ev.add_frame(decode_detections(&out, &lattice, &run.decode_params()), bundle.labels.actors);
        }
        let report = ev.report().to_report();
        artifacts.write(&format!("metrics_{tag}.txt"), report.as_bytes())?;
        reports.push(report);
    }
    o.require(
        report_schema(&reports[0]) == report_schema(&reports[1]),
        "L-MV and LC-MV metrics reports differ in schema",
    );
    let (rear, kept) = rear_actor_exclusion()?;
    o.value("fov_scenes", FOV_SCENES);
    o.value("fov_rear_actors", rear);
    o.value("fov_rear_kept", kept);
    o.require(kept == 0, format!("{kept} rear actors survived FOV slicing"));
    o.require(rear > 0, "no rear actors generated, FOV check is vacuous");
    Ok(o)
}

const FOV_SCENES: usize = 20;

/// (rear actors seen, rear actors kept by the 90° camera filter).
fn rear_actor_exclusion() -> Result<(usize, usize)> {
    let preset = Preset::atg4d();
    let everything = RangeBand::new(0.0, f64::INFINITY);
    let (mut rear, mut kept) = (0, 0);
    for seed in 0..FOV_SCENES as u64 {
        let scene = build_scene(&preset.scene, seed)?;
        let labels = scene_labels(&scene, preset.reference_time(), preset.horizon)?;
        rear += labels.actors.iter().filter(|l| l.bbox.cx < 0.0).count();
        kept += filter_camera_fov(&labels.actors, Some(&preset.camera), &everything)
            .iter()
            .filter(|l| l.bbox.cx < 0.0)
            .count();
    }
    Ok((rear, kept))
}

/// Lossless, versioned, checksummed bundles and weights.
pub fn bundle_io(artifacts: &mut Artifacts) -> Result<CheckOutcome> {
    let mut o = CheckOutcome::new("bundle_io");
    let preset = Preset::desk();
    let bundle = generate_bundle(&preset, 7, 0)?;
    let bytes = bundle.to_bytes();
    let again = FrameBundle::from_bytes(&bytes)?;
    o.require(again == bundle && again.to_bytes() == bytes, "bundle round trip is not bit-identical");
    o.require(generate_bundle(&preset, 7, 0)? == bundle, "bundle generation is not deterministic");
    o.require(
        FrameBundle::from_bytes(&bytes[..bytes.len() - 1]).is_err(),
        "truncated bundle was accepted",
    );
    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 0x01;
    o.require(FrameBundle::from_bytes(&flipped).is_err(), "corrupted bundle was accepted");
    o.require(bundle.validate(&Preset::nuscenes()).is_err(), "cross-preset bundle was accepted");
    let weights = NetworkWeights::seeded(&preset.net, 0);
    let wbytes = weights.to_bytes();
    o.require(
        NetworkWeights::from_bytes(&wbytes)?.to_bytes() == wbytes,
        "weights round trip is not bit-identical",
    );
    o.value("bundle_bytes", bytes.len());
    o.value("weight_parameters", weights.parameter_count());
    artifacts.write("desk_seed7_frame0.bundle", &bytes)?;
    artifacts.write("desk_seed0.weights", &wbytes)?;
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_sum_matches_closed_form() {
        let s = decay_sum(0.97, 30);
        assert!((s - (1.0 - 0.97f64.powi(31)) / 0.03).abs() < 1e-12);
    }

    #[test]
    fn schema_drops_values() {
        assert_eq!(report_schema("[a]\nk = 1\nj = n/a"), ["[a]", "k", "j"]);
    }
}
