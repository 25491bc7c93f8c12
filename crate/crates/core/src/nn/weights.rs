use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::network::{LayerKind, NetConfig};

const MAGIC: &str = "mvfusion-weights";
const VERSION: u32 = 1;
pub const GLOROT_UNIFORM: &str = "glorot-uniform";

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightBlock {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }
}

/// Ordered parameter blocks for every layer of a [`NetConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub blocks: Vec<WeightBlock>,
    pub scheme: String,
    pub seed: Option<u64>,
}

fn expected_blocks(config: &NetConfig) -> Vec<(String, Vec<usize>, usize, usize)> {
    let mut out = Vec::new();
    for layer in config.layers() {
        let (shape, fan_in, fan_out, cout) = match layer.kind {
            LayerKind::Conv(spec) => (
                vec![3, 3, spec.in_channels, spec.out_channels],
                spec.fan_in(),
                spec.fan_out(),
                spec.out_channels,
            ),
            LayerKind::Deconv { in_channels, out_channels } => (
                vec![1, 4, in_channels, out_channels],
                4 * in_channels,
                4 * out_channels,
                out_channels,
            ),
        };
        out.push((format!("{}.weight", layer.name), shape, fan_in, fan_out));
        out.push((format!("{}.bias", layer.name), vec![cout], 0, 0));
    }
    out
}

impl NetworkWeights {
    /// Uniform in ±√(6 / (fan_in + fan_out)) for kernels, zero biases.
    pub fn seeded(config: &NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = expected_blocks(config)
            .into_iter()
            .map(|(name, shape, fan_in, fan_out)| {
                let mut b = WeightBlock::zeros(name, shape);
                if fan_in > 0 {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                    for v in &mut b.data {
                        *v = rng.gen_range(-a..=a);
                    }
                }
                b
            })
            .collect();
        Self {
            blocks,
            scheme: GLOROT_UNIFORM.into(),
            seed: Some(seed),
        }
    }

    pub fn zeros(config: &NetConfig) -> Self {
        Self {
            blocks: expected_blocks(config)
                .into_iter()
                .map(|(name, shape, _, _)| WeightBlock::zeros(name, shape))
                .collect(),
            scheme: "zeros".into(),
            seed: None,
        }
    }

    /// Block names, order and shapes must match the topology; values must be finite.
    pub fn validate(&self, config: &NetConfig) -> Result<()> {
        let expected = expected_blocks(config);
        if expected.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "topology has {} parameter blocks, weights have {}",
                expected.len(),
                self.blocks.len()
            )));
        }
        for ((name, shape, _, _), b) in expected.iter().zip(&self.blocks) {
            if name != &b.name || shape != &b.shape {
                return Err(Error::ShapeMismatch(format!(
                    "expected block {name} {shape:?}, found {} {:?}",
                    b.name, b.shape
                )));
            }
            if b.data.len() != shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch(format!("block {name} has {} values", b.data.len())));
            }
            if b.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("block {name} holds non-finite values")));
            }
        }
        Ok(())
    }

    pub fn block(&self, name: &str) -> Result<&WeightBlock> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no weight block named {name}")))
    }

    pub fn block_mut(&mut self, name: &str) -> Result<&mut WeightBlock> {
        self.blocks
            .iter_mut()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no weight block named {name}")))
    }

    /// (kernel, bias) of a layer.
    pub fn layer(&self, name: &str) -> Result<(&[f32], &[f32])> {
        let w = self.block(&format!("{name}.weight"))?;
        let b = self.block(&format!("{name}.bias"))?;
        Ok((&w.data, &b.data))
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    /// Text manifest terminated by `end`, then little-endian f32 values in block order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC} {VERSION}\nscheme {}\n", self.scheme);
        if let Some(s) = self.seed {
            head.push_str(&format!("seed {s}\n"));
        }
        for b in &self.blocks {
            let dims: Vec<String> = b.shape.iter().map(|d| d.to_string()).collect();
            head.push_str(&format!("block {} {}\n", b.name, dims.join(" ")));
        }
        head.push_str("end\n");
        let mut out = head.into_bytes();
        for b in &self.blocks {
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end = find_manifest_end(bytes).ok_or_else(|| Error::Parse("weights manifest has no `end` line".into()))?;
        let manifest =
            std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Parse("weights manifest is not UTF-8".into()))?;
        let mut lines = manifest.lines();
        let first = lines.next().unwrap_or_default();
        let version = first
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::Parse(format!("not a weights file: `{first}`")))?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let mut scheme = String::new();
        let mut seed = None;
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("scheme") => scheme = parts.collect::<Vec<_>>().join(" "),
                Some("seed") => {
                    let s = parts.next().unwrap_or_default();
                    seed = Some(s.parse().map_err(|_| Error::Parse(format!("bad seed `{s}`")))?);
                }
                Some("block") => {
                    let name = parts.next().ok_or_else(|| Error::Parse("block line without name".into()))?;
                    let shape = parts
                        .map(|d| d.parse::<usize>().map_err(|_| Error::Parse(format!("bad dimension `{d}`"))))
                        .collect::<Result<Vec<_>>>()?;
                    shapes.push((name.to_string(), shape));
                }
                Some("end") | None => {}
                Some(other) => return Err(Error::Parse(format!("unknown manifest key `{other}`"))),
            }
        }
        let payload = &bytes[end..];
        let total: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if payload.len() != total * 4 {
            return Err(Error::Truncated(format!(
                "weights payload holds {} bytes, manifest needs {}",
                payload.len(),
                total * 4
            )));
        }
        let mut values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let blocks = shapes
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                WeightBlock {
                    name,
                    shape,
                    data: values.by_ref().take(n).collect(),
                }
            })
            .collect();
        Ok(Self { blocks, scheme, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn find_manifest_end(bytes: &[u8]) -> Option<usize> {
    let marker = b"\nend\n";
    bytes.windows(marker.len()).position(|w| w == marker).map(|i| i + marker.len())
}
