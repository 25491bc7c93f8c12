//! Frame bundles, dataset presets, run configuration and array files.

mod bundle;
mod preset;
mod run_config;
mod tensors;

pub use bundle::{frame_seed, generate_bundle, FrameBundle, BUNDLE_VERSION};
pub use preset::{Preset, PresetName};
pub use run_config::RunConfig;
