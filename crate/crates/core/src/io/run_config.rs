use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::eval::{DecodeParams, EvalConfig};
use crate::nn::{NetConfig, NetworkWeights};

use super::preset::{Preset, PresetName};

/// Batch-run settings, stored as `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: PresetName,
    /// Scene seed; frame `i` uses `frame_seed(seed, i)`.
    pub seed: u64,
    pub weight_seed: u64,
    pub frames: usize,
    /// LC-MV when set, L-MV otherwise.
    pub use_camera: bool,
    pub out: PathBuf,
    /// Saved weights; seeded weights are generated when absent.
    pub weights: Option<PathBuf>,
    pub score_floor: f64,
    pub nms_iou: f64,
    pub recall_target: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DecodeParams::default();
        Self {
            preset: PresetName::Desk,
            seed: 0,
            weight_seed: 0,
            frames: 1,
            use_camera: true,
            out: PathBuf::from("out"),
            weights: None,
            score_floor: d.score_floor,
            nms_iou: d.nms_iou,
            recall_target: 0.8,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| Error::Parse(format!("line {}: `{key}`: {e}", lineno + 1));
            macro_rules! val {
                ($t:ty) => {
                    value.parse::<$t>().map_err(|e| bad(&e))?
                };
            }
            match key {
                "preset" => cfg.preset = value.parse()?,
                "seed" => cfg.seed = val!(u64),
                "weight_seed" => cfg.weight_seed = val!(u64),
                "frames" => cfg.frames = val!(usize),
                "use_camera" => cfg.use_camera = val!(bool),
                "out" => cfg.out = PathBuf::from(value),
                "weights" => cfg.weights = (!value.is_empty()).then(|| PathBuf::from(value)),
                "score_floor" => cfg.score_floor = val!(f64),
                "nms_iou" => cfg.nms_iou = val!(f64),
                "recall_target" => cfg.recall_target = val!(f64),
                _ => return Err(Error::Parse(format!("line {}: unknown key `{key}`", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut kv = BTreeMap::new();
        kv.insert("preset", self.preset.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("weight_seed", self.weight_seed.to_string());
        kv.insert("frames", self.frames.to_string());
        kv.insert("use_camera", self.use_camera.to_string());
        kv.insert("out", self.out.display().to_string());
        kv.insert(
            "weights",
            self.weights.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        kv.insert("score_floor", self.score_floor.to_string());
        kv.insert("nms_iou", self.nms_iou.to_string());
        kv.insert("recall_target", self.recall_target.to_string());
        kv.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidArgument("frames must be at least 1".into()));
        }
        for (name, v) in [
            ("score_floor", self.score_floor),
            ("nms_iou", self.nms_iou),
            ("recall_target", self.recall_target),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn preset(&self) -> Preset {
        Preset::get(self.preset).with_camera(self.use_camera)
    }

    pub fn net_config(&self) -> NetConfig {
        self.preset().net
    }

    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams {
            score_floor: self.score_floor,
            nms_iou: self.nms_iou,
        }
    }

    /// Evaluation restricted to the camera FOV for LC-MV and to the full
    /// surround for L-MV, with DE at the last waypoint.
    pub fn eval_config(&self) -> EvalConfig {
        let p = self.preset();
        EvalConfig {
            camera: self.use_camera.then(|| p.camera.clone()),
            bands: p.bands.clone(),
            recall_target: self.recall_target,
            de_horizon: p.horizon,
        }
    }

    /// Loads `weights` or seeds fresh ones, then checks them against the
    /// branch toggles: camera layers must exist exactly when the camera is on.
    pub fn load_weights(&self) -> Result<NetworkWeights> {
        let config = self.net_config();
        let w = match &self.weights {
            Some(path) => NetworkWeights::load(path)?,
            None => NetworkWeights::seeded(&config, self.weight_seed),
        };
        w.validate(&config)?;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = RunConfig {
            preset: PresetName::Nuscenes,
            seed: 7,
            frames: 5,
            use_camera: false,
            weights: Some(PathBuf::from("w.bin")),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(RunConfig::parse("frames = 0").is_err());
        assert!(RunConfig::parse("nms = 0.3").is_err());
    }

    #[test]
    fn camera_toggle_must_match_weights() {
        let lc = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lc.weights");
        lc.load_weights().unwrap().save(&path).unwrap();
        let lmv = RunConfig {
            use_camera: false,
            weights: Some(path),
            ..RunConfig::default()
        };
        assert!(lmv.load_weights().is_err());
    }
}
