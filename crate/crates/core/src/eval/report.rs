use std::fmt::Write as _;

use crate::error::Error;
use crate::projection::CameraModel;
use crate::scene::{ActorClass, ActorLabel};

use super::decode::DetBox;
use super::metrics::{
    average_precision, displacement_error, match_detections, max_recall, operating_threshold_for_recall, MatchResult,
};
use super::slicing::{filter_camera_fov, RangeBand};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// `None` evaluates the full surround.
    pub camera: Option<CameraModel>,
    /// Full evaluation band first, then its sub-bands.
    pub bands: Vec<RangeBand>,
    pub recall_target: f64,
    /// Waypoint index at which displacement error is measured.
    pub de_horizon: usize,
}

/// How the operating threshold of a slice was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatingStatus {
    /// Recall target reached.
    Ok,
    /// Target out of reach; the threshold reaching maximum recall is used.
    RecallUnattainable,
    /// No true positives (or no ground truth) in the slice.
    NoTruePositives,
}

impl OperatingStatus {
    pub fn name(self) -> &'static str {
        match self {
            OperatingStatus::Ok => "ok",
            OperatingStatus::RecallUnattainable => "recall_unattainable",
            OperatingStatus::NoTruePositives => "no_true_positives",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceMetrics {
    pub class: ActorClass,
    pub band: RangeBand,
    pub num_gt: usize,
    pub num_det: usize,
    pub ap: f64,
    pub status: OperatingStatus,
    pub threshold: f64,
    pub recall: f64,
    pub tp_at_threshold: usize,
    pub de_cm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub frames: usize,
    pub recall_target: f64,
    pub slices: Vec<SliceMetrics>,
}

impl MetricsReport {
    pub fn slice(&self, class: ActorClass, band: &RangeBand) -> Option<&SliceMetrics> {
        self.slices.iter().find(|s| s.class == class && s.band == *band)
    }

    /// One `[class band]` section per slice with `key = value` lines.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "recall_target = {}", self.recall_target);
        for m in &self.slices {
            let _ = writeln!(s, "\n[{} {}]", m.class, m.band.name());
            let _ = writeln!(s, "ap = {:.6}", m.ap);
            let _ = writeln!(s, "status = {}", m.status.name());
            let _ = writeln!(s, "threshold = {:.6}", m.threshold);
            let _ = writeln!(s, "recall = {:.6}", m.recall);
            let _ = writeln!(s, "num_gt = {}", m.num_gt);
            let _ = writeln!(s, "num_det = {}", m.num_det);
            let _ = writeln!(s, "tp = {}", m.tp_at_threshold);
            match m.de_cm {
                Some(de) => {
                    let _ = writeln!(s, "de_cm = {de:.3}");
                }
                None => {
                    let _ = writeln!(s, "de_cm = n/a");
                }
            }
        }
        s
    }
}

struct Frame {
    dets: Vec<DetBox>,
    gts: Vec<ActorLabel>,
}

/// Accumulates frames, then computes AP and DE per class and range slice.
pub struct Evaluator {
    config: EvalConfig,
    frames: Vec<Frame>,
}

impl Evaluator {
    pub fn new(config: EvalConfig) -> Self {
        Self {
            config,
            frames: Vec::new(),
        }
    }

    pub fn add_frame(&mut self, dets: Vec<DetBox>, gts: Vec<ActorLabel>) {
        self.frames.push(Frame { dets, gts });
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn report(&self) -> MetricsReport {
        let mut slices = Vec::new();
        for class in ActorClass::ALL {
            for band in &self.config.bands {
                slices.push(self.slice(class, band));
            }
        }
        MetricsReport {
            frames: self.frames.len(),
            recall_target: self.config.recall_target,
            slices,
        }
    }

    fn slice(&self, class: ActorClass, band: &RangeBand) -> SliceMetrics {
        let cam = self.config.camera.as_ref();
        let mut results = Vec::new();
        let mut kept = Vec::new();
        let (mut num_gt, mut num_det) = (0, 0);
        for f in &self.frames {
            let dets: Vec<&DetBox> = filter_camera_fov(&f.dets, cam, band)
                .into_iter()
                .filter(|d| d.class == class)
                .collect();
            let gts: Vec<&ActorLabel> = filter_camera_fov(&f.gts, cam, band)
                .into_iter()
                .filter(|g| g.class == class)
                .collect();
            let det_boxes: Vec<_> = dets.iter().map(|d| (d.score, d.bbox)).collect();
            let gt_boxes: Vec<_> = gts.iter().map(|g| g.bbox).collect();
            num_gt += gts.len();
            num_det += dets.len();
            results.push(match_detections(&det_boxes, &gt_boxes, class.iou_threshold()));
            kept.push((dets, gts));
        }
        let ap = average_precision(&results);
        let (status, threshold) = match operating_threshold_for_recall(&results, self.config.recall_target) {
            Ok(t) => (OperatingStatus::Ok, t),
            Err(Error::RecallUnattainable { .. }) => match lowest_tp_score(&results) {
                Some(t) => (OperatingStatus::RecallUnattainable, t),
                None => (OperatingStatus::NoTruePositives, 1.0),
            },
            Err(_) => (OperatingStatus::NoTruePositives, 1.0),
        };
        let mut pairs = Vec::new();
        let mut tp = 0;
        if status != OperatingStatus::NoTruePositives {
            let h = self.config.de_horizon;
            for (r, (dets, gts)) in results.iter().zip(&kept) {
                for e in r.entries.iter().filter(|e| e.score >= threshold) {
                    let Some(g) = e.gt else { continue };
                    tp += 1;
                    let (d, g) = (dets[e.det], gts[g]);
                    if h <= d.trajectory.len() && h <= g.waypoints.len() {
                        let (p, q) = (d.waypoint(h), g.waypoint(h));
                        pairs.push(((p.cx, p.cy), (q.cx, q.cy)));
                    }
                }
            }
        }
        let recall = if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 };
        debug_assert!(status != OperatingStatus::RecallUnattainable || (recall - max_recall(&results)).abs() < 1e-12);
        SliceMetrics {
            class,
            band: *band,
            num_gt,
            num_det,
            ap,
            status,
            threshold,
            recall,
            tp_at_threshold: tp,
            de_cm: displacement_error(&pairs),
        }
    }
}

fn lowest_tp_score(results: &[MatchResult]) -> Option<f64> {
    results
        .iter()
        .flat_map(|r| r.entries.iter())
        .filter(|e| e.is_tp())
        .map(|e| e.score)
        .min_by(f64::total_cmp)
}
