//! Decoding, rotated-box AP, displacement error, FOV/range slicing and
//! stage timing.

mod decode;
mod metrics;
mod report;
mod slicing;
mod timing;

pub use decode::{decode_detections, nms, DecodeParams, DetBox};
pub use metrics::{
    average_precision, displacement_error, match_detections, max_recall, operating_threshold_for_recall, pr_curve,
    rotated_iou, MatchEntry, MatchResult,
};
pub use report::{EvalConfig, Evaluator, MetricsReport, OperatingStatus, SliceMetrics};
pub use slicing::{filter_camera_fov, in_camera_fov, Located, RangeBand};
pub use timing::{median, time_pipeline, LatencyReport, StageLatency, StageTimer};
