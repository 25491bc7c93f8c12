use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use mvfusion::eval::{decode_detections, rotated_iou as iou, DetBox, Evaluator};
use mvfusion::geometry::RotatedBox2D;
use mvfusion::io::{generate_bundle, FrameBundle, Preset, RunConfig};
use mvfusion::nn::{CellOutputs, FusionNet};
use mvfusion::objectives::{encode_targets, fit_outputs, LossParams};
use mvfusion::pipeline::{prepare_frame, run_forward, PreparedFrame};
use mvfusion::raster::FeatureMap;
use mvfusion::scene::ActorLabel;

type BoxTuple = (f64, f64, f64, f64, f64);
type Waypoints = Vec<(f64, f64, f64)>;

fn err(e: mvfusion::Error) -> PyErr {
    match e {
        mvfusion::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn preset(name: &str, use_camera: bool) -> PyResult<Preset> {
    Ok(Preset::by_name(name).map_err(err)?.with_camera(use_camera))
}

fn run_config(preset: &str, use_camera: bool) -> PyResult<RunConfig> {
    Ok(RunConfig {
        preset: preset.parse().map_err(err)?,
        use_camera,
        ..RunConfig::default()
    })
}

fn box_tuple(b: &RotatedBox2D) -> BoxTuple {
    (b.cx, b.cy, b.length, b.width, b.heading)
}

fn make_box((cx, cy, l, w, h): BoxTuple) -> PyResult<RotatedBox2D> {
    RotatedBox2D::new(cx, cy, l, w, h).map_err(err)
}

/// One simulated frame: history sweeps, map, camera image and labels.
#[pyclass(name = "Bundle", frozen)]
struct PyBundle {
    inner: FrameBundle,
}

#[pymethods]
impl PyBundle {
    #[staticmethod]
    #[pyo3(signature = (preset="desk", seed=0, frame=0))]
    fn generate(preset: &str, seed: u64, frame: usize) -> PyResult<Self> {
        let p = Preset::by_name(preset).map_err(err)?;
        Ok(Self {
            inner: generate_bundle(&p, seed, frame).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: FrameBundle::load(&path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: FrameBundle::from_bytes(data).map_err(err)?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn preset(&self) -> String {
        self.inner.preset.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn frame(&self) -> usize {
        self.inner.frame
    }

    #[getter]
    fn timestamp(&self) -> f64 {
        self.inner.timestamp
    }

    #[getter]
    fn num_sweeps(&self) -> usize {
        self.inner.sweeps.len()
    }

    /// Points in the newest sweep.
    #[getter]
    fn num_points(&self) -> usize {
        self.inner.current_sweep().points.len()
    }

    #[getter]
    fn image_shape(&self) -> (usize, usize) {
        (self.inner.image.height, self.inner.image.width)
    }

    /// `(id, class, box, waypoints)` per actor; box is `(cx, cy, l, w, heading)`.
    fn labels(&self) -> Vec<(u32, String, BoxTuple, Waypoints)> {
        self.inner.labels.actors.iter().map(label_tuple).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle(preset={}, seed={}, frame={}, actors={})",
            self.inner.preset,
            self.inner.seed,
            self.inner.frame,
            self.inner.labels.actors.len()
        )
    }
}

fn label_tuple(a: &ActorLabel) -> (u32, String, BoxTuple, Waypoints) {
    (
        a.id,
        a.class.name().to_string(),
        box_tuple(&a.bbox),
        a.waypoints.iter().map(|w| (w.cx, w.cy, w.heading)).collect(),
    )
}

/// HWC float32 feature map.
#[pyclass(name = "FeatureMap", frozen)]
struct PyFeatureMap {
    inner: FeatureMap,
}

#[pymethods]
impl PyFeatureMap {
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: FeatureMap::from_bytes(data).map_err(err)?,
        })
    }

    #[getter]
    fn view(&self) -> String {
        self.inner.view.to_string()
    }

    /// `(height, width, channels)`
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.height, self.inner.width, self.inner.channels)
    }

    fn data(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    fn get(&self, row: usize, col: usize, channel: usize) -> PyResult<f32> {
        let fm = &self.inner;
        if row >= fm.height || col >= fm.width || channel >= fm.channels {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(fm.get(row, col, channel))
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    /// Binary PGM of one channel, values clamped to [-1, 1].
    fn channel_pgm<'py>(&self, py: Python<'py>, channel: usize) -> PyResult<Bound<'py, PyBytes>> {
        if channel >= self.inner.channels {
            return Err(PyValueError::new_err("channel out of range"));
        }
        Ok(PyBytes::new(py, &self.inner.channel_pgm(channel)))
    }

    fn __repr__(&self) -> String {
        let (h, w, c) = self.shape();
        format!("FeatureMap(view={}, shape=({h}, {w}, {c}))", self.inner.view)
    }
}

/// Network inputs prepared from one bundle.
#[pyclass(name = "Frame", frozen)]
struct PyFrame {
    inner: PreparedFrame,
}

#[pymethods]
impl PyFrame {
    #[getter]
    fn lidar_bev(&self) -> PyFeatureMap {
        PyFeatureMap {
            inner: self.inner.lidar_bev.clone(),
        }
    }

    #[getter]
    fn map_raster(&self) -> PyFeatureMap {
        PyFeatureMap {
            inner: self.inner.map_raster.clone(),
        }
    }

    #[getter]
    fn rv_image(&self) -> PyFeatureMap {
        PyFeatureMap {
            inner: self.inner.rv_image.clone(),
        }
    }

    /// Cropped camera image as `(height, width)`.
    #[getter]
    fn image_shape(&self) -> (usize, usize) {
        (self.inner.image.height, self.inner.image.width)
    }
}

/// Per-cell detection and trajectory outputs.
#[pyclass(name = "Outputs", frozen)]
struct PyOutputs {
    inner: CellOutputs,
}

#[pymethods]
impl PyOutputs {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CellOutputs::load(&path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: CellOutputs::from_bytes(data).map_err(err)?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    /// `(rows, cols, classes, channels per class)`
    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        let o = &self.inner;
        (o.rows, o.cols, o.classes, o.layout().per_class())
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    fn prob(&self, row: usize, col: usize, class: usize) -> PyResult<f64> {
        let o = &self.inner;
        if row >= o.rows || col >= o.cols || class >= o.classes {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(o.prob(row, col, class))
    }
}

#[pyfunction]
#[pyo3(signature = (bundle, use_camera=true))]
fn prepare(bundle: &PyBundle, use_camera: bool) -> PyResult<PyFrame> {
    let p = preset(bundle.inner.preset.name(), use_camera)?;
    Ok(PyFrame {
        inner: prepare_frame(&bundle.inner, &p).map_err(err)?,
    })
}

/// Seeded network forward pass on one bundle.
#[pyfunction]
#[pyo3(signature = (bundle, weight_seed=0, use_camera=true))]
fn forward(bundle: &PyBundle, weight_seed: u64, use_camera: bool) -> PyResult<PyOutputs> {
    let p = preset(bundle.inner.preset.name(), use_camera)?;
    let frame = prepare_frame(&bundle.inner, &p).map_err(err)?;
    let net = FusionNet::seeded(p.net.clone(), weight_seed).map_err(err)?;
    Ok(PyOutputs {
        inner: run_forward(&net, &frame).map_err(err)?,
    })
}

/// Fits outputs to the bundle's labels; returns the outputs and loss history.
#[pyfunction]
#[pyo3(signature = (bundle, steps=1000, lr=1.0))]
fn fit(bundle: &PyBundle, steps: usize, lr: f64) -> PyResult<(PyOutputs, Vec<f64>)> {
    let p = preset(bundle.inner.preset.name(), true)?;
    let targets = encode_targets(&bundle.inner.labels, &p.grid, p.output_stride, p.horizon).map_err(err)?;
    let params = LossParams {
        horizon: p.horizon,
        ..LossParams::default()
    };
    let result = fit_outputs(&targets, &params, steps, lr).map_err(err)?;
    Ok((PyOutputs { inner: result.outputs }, result.history))
}

fn det_tuple(d: &DetBox) -> (String, f64, BoxTuple, Waypoints) {
    (
        d.class.name().to_string(),
        d.score,
        box_tuple(&d.bbox),
        d.trajectory.iter().map(|w| (w.cx, w.cy, w.heading)).collect(),
    )
}

/// Thresholded, NMS-filtered detections as `(class, score, box, trajectory)`.
#[pyfunction]
#[pyo3(signature = (outputs, preset="desk", score_floor=0.1, nms_iou=0.3))]
fn decode(
    outputs: &PyOutputs,
    preset: &str,
    score_floor: f64,
    nms_iou: f64,
) -> PyResult<Vec<(String, f64, BoxTuple, Waypoints)>> {
    let cfg = RunConfig {
        score_floor,
        nms_iou,
        ..run_config(preset, true)?
    };
    cfg.validate().map_err(err)?;
    let p = cfg.preset();
    let lattice = p.grid.lattice(p.output_stride);
    let dets = decode_detections(&outputs.inner, &lattice, &cfg.decode_params());
    Ok(dets.iter().map(det_tuple).collect())
}

/// Metrics report over paired bundles and outputs, in the CLI's text format.
#[pyfunction]
#[pyo3(signature = (bundles, outputs, use_camera=true, recall_target=0.8))]
fn evaluate(
    bundles: Vec<PyRef<'_, PyBundle>>,
    outputs: Vec<PyRef<'_, PyOutputs>>,
    use_camera: bool,
    recall_target: f64,
) -> PyResult<String> {
    if bundles.is_empty() || bundles.len() != outputs.len() {
        return Err(PyValueError::new_err("need one outputs per bundle"));
    }
    let cfg = RunConfig {
        recall_target,
        ..run_config(bundles[0].inner.preset.name(), use_camera)?
    };
    cfg.validate().map_err(err)?;
    let p = cfg.preset();
    let lattice = p.grid.lattice(p.output_stride);
    let mut ev = Evaluator::new(cfg.eval_config());
    for (b, o) in bundles.iter().zip(&outputs) {
        if b.inner.preset != p.name {
            return Err(PyValueError::new_err("bundles mix presets"));
        }
        let dets = decode_detections(&o.inner, &lattice, &cfg.decode_params());
        ev.add_frame(dets, b.inner.labels.actors.clone());
    }
    Ok(ev.report().to_report())
}

/// Polygon-clipping IoU of two `(cx, cy, length, width, heading)` boxes.
#[pyfunction]
fn rotated_iou(a: BoxTuple, b: BoxTuple) -> PyResult<f64> {
    Ok(iou(&make_box(a)?, &make_box(b)?))
}

/// Runs every self-check suite, writing artifacts to `out_dir`.
/// Returns `(passed, report_text)`.
#[pyfunction]
fn selfcheck(out_dir: PathBuf) -> PyResult<(bool, String)> {
    let report = mvfusion::selfcheck::run_selfcheck(&out_dir).map_err(err)?;
    Ok((report.passed(), report.to_report()))
}

#[pymodule]
fn mvfusion_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBundle>()?;
    m.add_class::<PyFeatureMap>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyOutputs>()?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(rotated_iou, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    Ok(())
}
