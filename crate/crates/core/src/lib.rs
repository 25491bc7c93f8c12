//! Multi-view LiDAR, camera and HD-map fusion toolkit for joint object
//! detection and motion prediction.
//!
//! The crate covers the full first-stage pipeline on synthetic data:
//!
//! * [`scene`]: seeded worlds, LiDAR ray casting, camera rendering and labels
//! * [`raster`]: BEV occupancy, range-view image and map raster encodings
//! * [`projection`]: per-point view projectors and average-pooled feature projection
//! * [`nn`]: forward-only fusion network
//! * [`objectives`]: detection + trajectory loss, gradients and an output fitter
//! * [`eval`]: decoding, rotated IoU, AP, displacement error, FOV slicing, timing
//! * [`io`]: frame bundles, presets and run configuration
//! * [`pipeline`]: bundle to detections, with stage timing
//! * [`oracle`] and [`selfcheck`]: slow reference implementations and the suites built on them

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod objectives;
pub mod oracle;
pub mod pipeline;
pub mod projection;
pub mod raster;
pub mod scene;
pub mod selfcheck;

pub use error::{Error, Result};
