//! Feature maps and cell outputs on disk: a short text header ending in
//! `end`, then raw little-endian values.
//!
//! ```text
//! mvfusion-fmap 1              mvfusion-outputs 1
//! shape <view> <h> <w> <c>     shape <rows> <cols> <classes> <horizon>
//! end                          end
//! <h·w·c f32>                  <rows·cols·channels f64>
//! ```
//!
//! View geometry is not stored; a loaded feature map has none.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::CellOutputs;
use crate::raster::{FeatureMap, ViewTag};

const FMAP_MAGIC: &str = "mvfusion-fmap";
const OUTPUTS_MAGIC: &str = "mvfusion-outputs";
const VERSION: u32 = 1;

/// Splits off the header and returns its `shape` fields and the payload.
fn split_header<'a>(bytes: &'a [u8], magic: &str) -> Result<(Vec<&'a str>, &'a [u8])> {
    let end = bytes
        .windows(4)
        .position(|w| w == b"end\n")
        .ok_or_else(|| Error::Truncated(format!("{magic} header has no `end` line")))?;
    let head = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Parse(format!("{magic} header is not UTF-8")))?;
    let mut lines = head.lines();
    let first = lines.next().unwrap_or_default();
    let version = first
        .strip_prefix(magic)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Parse(format!("expected `{magic} <version>`, found `{first}`")))?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let shape = lines
        .find_map(|l| l.strip_prefix("shape "))
        .ok_or_else(|| Error::Parse(format!("{magic} header has no shape line")))?;
    Ok((shape.split_whitespace().collect(), &bytes[end + 4..]))
}

fn dim(s: Option<&&str>) -> Result<usize> {
    let s = s.ok_or_else(|| Error::Parse("short shape line".into()))?;
    s.parse().map_err(|_| Error::Parse(format!("bad dimension `{s}`")))
}

fn payload_len(payload: &[u8], want: usize) -> Result<()> {
    match payload.len().cmp(&want) {
        std::cmp::Ordering::Less => Err(Error::Truncated(format!("payload holds {} of {want} bytes", payload.len()))),
        std::cmp::Ordering::Greater => Err(Error::Parse(format!("{} trailing bytes", payload.len() - want))),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

impl FeatureMap {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "{FMAP_MAGIC} {VERSION}\nshape {} {} {} {}\nend\n",
            self.view, self.height, self.width, self.channels
        )
        .into_bytes();
        out.reserve(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (shape, payload) = split_header(bytes, FMAP_MAGIC)?;
        let view = match shape.first().copied() {
            Some("bev") => ViewTag::Bev,
            Some("rv") => ViewTag::Rv,
            Some("camera") => ViewTag::Camera,
            other => return Err(Error::Parse(format!("unknown view {other:?}"))),
        };
        let (h, w, c) = (dim(shape.get(1))?, dim(shape.get(2))?, dim(shape.get(3))?);
        payload_len(payload, h * w * c * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
            .collect();
        FeatureMap::from_vec(view, h, w, c, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl CellOutputs {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "{OUTPUTS_MAGIC} {VERSION}\nshape {} {} {} {}\nend\n",
            self.rows, self.cols, self.classes, self.horizon
        )
        .into_bytes();
        out.reserve(self.data.len() * 8);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (shape, payload) = split_header(bytes, OUTPUTS_MAGIC)?;
        let (rows, cols, classes, horizon) =
            (dim(shape.first())?, dim(shape.get(1))?, dim(shape.get(2))?, dim(shape.get(3))?);
        let n = rows * cols * classes * crate::nn::OutputLayout::new(horizon).per_class();
        payload_len(payload, n * 8)?;
        let data = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        CellOutputs::from_vec(rows, cols, classes, horizon, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_map_round_trip() {
        let fm = FeatureMap::from_vec(ViewTag::Rv, 2, 3, 2, (0..12).map(|i| i as f32 * 0.5 - 1.0).collect()).unwrap();
        let bytes = fm.to_bytes();
        assert_eq!(FeatureMap::from_bytes(&bytes).unwrap(), fm);
        assert!(matches!(FeatureMap::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated(_))));
    }

    #[test]
    fn outputs_round_trip() {
        let o = CellOutputs::neutral(2, 2, 3, 4);
        let bytes = o.to_bytes();
        assert_eq!(CellOutputs::from_bytes(&bytes).unwrap(), o);
        let mut v2 = bytes.clone();
        v2[17] = b'2';
        assert!(matches!(CellOutputs::from_bytes(&v2), Err(Error::VersionMismatch { found: 2, .. })));
    }
}
