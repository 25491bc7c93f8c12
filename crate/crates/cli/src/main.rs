use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mvfusion::eval::{time_pipeline, Evaluator};
use mvfusion::io::{generate_bundle, FrameBundle, Preset, PresetName, RunConfig};
use mvfusion::nn::{image_features, CellOutputs, FusionNet};
use mvfusion::objectives::{encode_targets, fit_outputs, total_loss, LossParams};
use mvfusion::pipeline::{prepare_frame, run_forward, timed_inference, PreparedFrame};
use mvfusion::projection::{project_features, CameraView};
use mvfusion::raster::{FeatureMap, ViewGeometry};
use mvfusion::selfcheck::run_selfcheck;

/// Multi-view LiDAR/camera/map fusion: data generation, encodings,
/// inference, loss fitting, evaluation and self-checks.
#[derive(Parser)]
#[command(name = "mvfusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct RunFlags {
    /// atg4d, nuscenes or desk
    #[arg(long, global = true, default_value = "desk", value_parser = parse_preset)]
    preset: PresetName,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    frames: usize,
    /// LiDAR-only variant (L-MV): no camera branch, full-surround evaluation.
    #[arg(long, global = true)]
    no_camera: bool,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Saved network weights; seeded weights are used when absent.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    weight_seed: u64,
    #[arg(long, global = true, default_value_t = 0.1)]
    score_floor: f64,
    #[arg(long, global = true, default_value_t = 0.3)]
    nms_iou: f64,
    #[arg(long, global = true, default_value_t = 0.8)]
    recall_target: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenes and write one bundle per frame.
    Gen,
    /// Bundles to BEV, map and RV feature maps plus PGM dumps.
    Raster { bundles: Vec<PathBuf> },
    /// Point-pooled projections RV→BEV and camera→RV with validity maps.
    Project { bundles: Vec<PathBuf> },
    /// Seeded or loaded network weights, bundles to cell outputs.
    Forward { bundles: Vec<PathBuf> },
    /// Fit cell outputs directly to each bundle's labels.
    Fit {
        bundles: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        lr: f64,
    },
    /// Decode outputs and write the metrics report. Without `--outputs`
    /// the network is run on each bundle.
    Eval {
        bundles: Vec<PathBuf>,
        /// One outputs file per bundle, in the same order.
        #[arg(long, num_args = 1..)]
        outputs: Vec<PathBuf>,
    },
    /// Per-stage latency table over repeated runs on one bundle.
    Bench {
        bundles: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Run every oracle and invariant suite.
    Selfcheck,
}

fn parse_preset(s: &str) -> Result<PresetName, String> {
    s.parse().map_err(|e: mvfusion::Error| e.to_string())
}

impl RunFlags {
    fn config(&self) -> Result<RunConfig> {
        let cfg = RunConfig {
            preset: self.preset,
            seed: self.seed,
            weight_seed: self.weight_seed,
            frames: self.frames,
            use_camera: !self.no_camera,
            out: self.out.clone(),
            weights: self.weights.clone(),
            score_floor: self.score_floor,
            nms_iou: self.nms_iou,
            recall_target: self.recall_target,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Collects artifact paths; they are printed once the command succeeds.
struct Out {
    dir: PathBuf,
    paths: Vec<PathBuf>,
}

impl Out {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            paths: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.paths.push(p);
        Ok(())
    }

    fn fmap(&mut self, name: &str, fm: &FeatureMap) -> Result<()> {
        self.write(name, &fm.to_bytes())
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "frame".into(), |s| s.to_string_lossy().into_owned())
}

fn require_inputs(bundles: &[PathBuf]) -> Result<()> {
    if bundles.is_empty() {
        bail!("missing input: pass one or more bundle files");
    }
    Ok(())
}

fn load(path: &Path, preset: &Preset) -> Result<FrameBundle> {
    FrameBundle::load_for(path, preset).with_context(|| format!("reading {}", path.display()))
}

fn prepared(path: &Path, preset: &Preset) -> Result<(FrameBundle, PreparedFrame)> {
    let bundle = load(path, preset)?;
    let frame = prepare_frame(&bundle, preset)?;
    Ok((bundle, frame))
}

fn network(cfg: &RunConfig) -> Result<FusionNet> {
    let weights = cfg.load_weights().context("loading network weights")?;
    Ok(FusionNet::new(cfg.net_config(), weights)?)
}

/// Any-occupied collapse of a stack, as ±1 so it dumps as black/white.
fn occupancy(fm: &FeatureMap) -> FeatureMap {
    let data = fm
        .data
        .chunks_exact(fm.channels)
        .map(|c| if c.iter().any(|&v| v != 0.0) { 1.0 } else { -1.0 })
        .collect();
    FeatureMap::from_vec(fm.view, fm.height, fm.width, 1, data).expect("one value per cell")
}

fn gen(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    let preset = cfg.preset();
    for frame in 0..cfg.frames {
        let bundle = generate_bundle(&preset, cfg.seed, frame)?;
        out.write(&format!("{}_s{}_f{frame}.bundle", preset.name, cfg.seed), &bundle.to_bytes())?;
    }
    Ok(())
}

fn raster(cfg: &RunConfig, bundles: &[PathBuf], out: &mut Out) -> Result<()> {
    let preset = cfg.preset();
    for path in bundles {
        let s = stem(path);
        let (_, f) = prepared(path, &preset)?;
        out.fmap(&format!("{s}_bev.fmap"), &f.lidar_bev)?;
        out.fmap(&format!("{s}_map.fmap"), &f.map_raster)?;
        out.fmap(&format!("{s}_rv.fmap"), &f.rv_image)?;
        out.write(&format!("{s}_bev_occupancy.pgm"), &occupancy(&f.lidar_bev).channel_pgm(0))?;
        for ch in 0..f.map_raster.channels {
            out.write(&format!("{s}_map_{ch}.pgm"), &f.map_raster.channel_pgm(ch))?;
        }
        // validity is 0/1, shift it to ±1 for the dump
        let mut rv = f.rv_image.clone();
        for cell in rv.data.chunks_exact_mut(4) {
            cell[3] = 2.0 * cell[3] - 1.0;
        }
        for (ch, name) in ["range", "height", "intensity", "valid"].iter().enumerate() {
            out.write(&format!("{s}_rv_{name}.pgm"), &rv.channel_pgm(ch))?;
        }
    }
    Ok(())
}

fn project(cfg: &RunConfig, bundles: &[PathBuf], out: &mut Out) -> Result<()> {
    let preset = cfg.preset();
    let bev = ViewGeometry::Bev(preset.grid);
    let rv = ViewGeometry::Rv(preset.rv());
    for path in bundles {
        let s = stem(path);
        let (_, f) = prepared(path, &preset)?;
        let (feat, valid) = project_features(&f.rv_image, &f.points, &bev)?;
        out.fmap(&format!("{s}_rv_to_bev.fmap"), &feat)?;
        out.write(&format!("{s}_rv_to_bev_valid.pgm"), &valid.channel_pgm(0))?;
        if cfg.use_camera {
            let pixels = ViewGeometry::Camera(CameraView {
                camera: preset.camera.clone(),
                stride: 1,
            });
            let src = image_features(&f.image).with_geometry(pixels);
            let (feat, valid) = project_features(&src, &f.points, &rv)?;
            out.fmap(&format!("{s}_camera_to_rv.fmap"), &feat)?;
            out.write(&format!("{s}_camera_to_rv_valid.pgm"), &valid.channel_pgm(0))?;
        }
    }
    Ok(())
}

fn forward(cfg: &RunConfig, bundles: &[PathBuf], out: &mut Out) -> Result<()> {
    let preset = cfg.preset();
    let net = network(cfg)?;
    if cfg.weights.is_none() {
        out.write(&format!("{}_w{}.weights", preset.name, cfg.weight_seed), &net.weights.to_bytes())?;
    }
    for path in bundles {
        let (_, f) = prepared(path, &preset)?;
        let outputs = run_forward(&net, &f)?;
        out.write(&format!("{}.outputs", stem(path)), &outputs.to_bytes())?;
    }
    Ok(())
}

fn fit(cfg: &RunConfig, bundles: &[PathBuf], steps: usize, lr: f64, out: &mut Out) -> Result<()> {
    let preset = cfg.preset();
    let params = LossParams {
        horizon: preset.horizon,
        ..LossParams::default()
    };
    for path in bundles {
        let s = stem(path);
        let bundle = load(path, &preset)?;
        let targets = encode_targets(&bundle.labels, &preset.grid, preset.output_stride, preset.horizon)?;
        let result = fit_outputs(&targets, &params, steps, lr)?;
        let breakdown = total_loss(&result.outputs, &targets, &params)?;
        let mut report = format!(
            "steps = {}\nloss_start = {}\nloss_end = {}\n",
            result.history.len() - 1,
            result.history[0],
            result.history.last().expect("history starts with the initial loss")
        );
        report.push_str(&breakdown.to_report());
        out.write(&format!("{s}.fit.outputs"), &result.outputs.to_bytes())?;
        out.write(&format!("{s}.fit.txt"), report.as_bytes())?;
    }
    Ok(())
}

fn eval(cfg: &RunConfig, bundles: &[PathBuf], outputs: &[PathBuf], out: &mut Out) -> Result<()> {
    let preset = cfg.preset();
    if !outputs.is_empty() && outputs.len() != bundles.len() {
        bail!("{} outputs files for {} bundles", outputs.len(), bundles.len());
    }
    let net = if outputs.is_empty() { Some(network(cfg)?) } else { None };
    let lattice = preset.grid.lattice(preset.output_stride);
    let mut ev = Evaluator::new(cfg.eval_config());
    for (i, path) in bundles.iter().enumerate() {
        let bundle = load(path, &preset)?;
        let cell_outputs = match &net {
            Some(net) => run_forward(net, &prepare_frame(&bundle, &preset)?)?,
            None => CellOutputs::load(&outputs[i]).with_context(|| format!("reading {}", outputs[i].display()))?,
        };
        if (cell_outputs.rows, cell_outputs.cols) != (lattice.rows, lattice.cols) {
            bail!(
                "outputs are {}x{}, the {} lattice is {}x{}",
                cell_outputs.rows,
                cell_outputs.cols,
                preset.name,
                lattice.rows,
                lattice.cols
            );
        }
        let dets = mvfusion::eval::decode_detections(&cell_outputs, &lattice, &cfg.decode_params());
        ev.add_frame(dets, bundle.labels.actors);
    }
    let report = format!(
        "preset = {}\nvariant = {}\n{}",
        preset.name,
        if cfg.use_camera { "lc-mv" } else { "l-mv" },
        ev.report().to_report()
    );
    out.write("metrics.txt", report.as_bytes())
}

fn bench(cfg: &RunConfig, bundles: &[PathBuf], reps: usize, out: &mut Out) -> Result<()> {
    let preset = cfg.preset();
    let net = network(cfg)?;
    let bundle = load(&bundles[0], &preset)?;
    let decode = cfg.decode_params();
    let report = time_pipeline(reps, |t| {
        let frame = t.stage("prepare", || prepare_frame(&bundle, &preset))?;
        timed_inference(&net, &frame, &decode, t)?;
        Ok(())
    })?;
    out.write("latency.txt", report.to_report().as_bytes())
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let cfg = cli.run.config()?;
    let mut out = Out::new(&cfg.out)?;
    match &cli.command {
        Command::Gen => gen(&cfg, &mut out)?,
        Command::Raster { bundles } => {
            require_inputs(bundles)?;
            raster(&cfg, bundles, &mut out)?
        }
        Command::Project { bundles } => {
            require_inputs(bundles)?;
            project(&cfg, bundles, &mut out)?
        }
        Command::Forward { bundles } => {
            require_inputs(bundles)?;
            forward(&cfg, bundles, &mut out)?
        }
        Command::Fit { bundles, steps, lr } => {
            require_inputs(bundles)?;
            fit(&cfg, bundles, *steps, *lr, &mut out)?
        }
        Command::Eval { bundles, outputs } => {
            require_inputs(bundles)?;
            eval(&cfg, bundles, outputs, &mut out)?
        }
        Command::Bench { bundles, reps } => {
            require_inputs(bundles)?;
            bench(&cfg, bundles, *reps, &mut out)?
        }
        Command::Selfcheck => {
            let report = run_selfcheck(&cfg.out)?;
            if !report.passed() {
                let failed: Vec<String> = report
                    .checks
                    .iter()
                    .flat_map(|c| c.failures.iter().map(move |f| format!("{}: {f}", c.name)))
                    .collect();
                bail!("selfcheck failed\n{}", failed.join("\n"));
            }
            out.paths.extend(report.artifacts);
        }
    }
    if !matches!(cli.command, Command::Selfcheck) {
        out.write("run_config.txt", cfg.to_text().as_bytes())?;
    }
    Ok(out.paths)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
