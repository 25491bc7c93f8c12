//! Single-file frame bundle.
//!
//! ```text
//! mvfusion-bundle 1
//! preset <name>
//! seed <u64>
//! frame <index>
//! timestamp <seconds>
//! section <name> <byte length> <crc32 hex>      (five lines, fixed order)
//! end
//! <section payloads, concatenated in the same order>
//! ```
//!
//! Point records are seven little-endian f32 values per return in the order
//! x, y, z, r, e, θ, m. Sweep metadata, map and labels are line-oriented
//! text; numbers are written in shortest round-trip form. The image is a
//! binary PPM.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2, RotatedBox2D};
use crate::scene::{
    build_scene, render_camera, scene_labels, simulate_sweep, ActorClass, ActorLabel, Image, LabelSet, LidarPoint,
    MapElement, MapGeometry, MapLayer, Sweep, Waypoint,
};

use super::preset::{Preset, PresetName};

const MAGIC: &str = "mvfusion-bundle";
pub const BUNDLE_VERSION: u32 = 1;
const SECTIONS: [&str; 5] = ["sweeps", "sweep_meta", "map", "labels", "image"];
const POINT_FIELDS: usize = 7;

/// One training/evaluation frame: T sweeps (oldest first, each in its own
/// capture frame), plus map, image and labels at the newest sweep's time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub preset: PresetName,
    pub seed: u64,
    pub frame: usize,
    pub timestamp: f64,
    pub sweeps: Vec<Sweep>,
    /// Ego frame at `timestamp`.
    pub map: MapGeometry,
    /// Full sensor frame, uncropped.
    pub image: Image,
    pub labels: LabelSet,
}

/// Scene seed of frame `frame` in a run seeded with `seed`.
pub fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(frame as u64 + 1)
}

/// Simulates one frame. The result is passed through the on-disk encoding
/// once, so an in-memory bundle always equals what a reader would load.
pub fn generate_bundle(preset: &Preset, seed: u64, frame: usize) -> Result<FrameBundle> {
    let scene = build_scene(&preset.scene, frame_seed(seed, frame))?;
    let t = preset.reference_time();
    let sweeps = (0..preset.history)
        .map(|k| {
            let tk = t - (preset.history - 1 - k) as f64 * preset.sweep_period;
            simulate_sweep(&scene, &preset.lidar, tk.max(0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = FrameBundle {
        preset: preset.name,
        seed,
        frame,
        timestamp: t,
        sweeps,
        map: scene.map_in_ego(t)?,
        image: render_camera(&scene, &preset.camera, t)?,
        labels: scene_labels(&scene, t, preset.horizon)?,
    };
    FrameBundle::from_bytes(&bundle.to_bytes())
}

impl FrameBundle {
    /// Sweep count and image size must match the preset; all components
    /// must share the reference timestamp.
    pub fn validate(&self, preset: &Preset) -> Result<()> {
        if self.preset != preset.name {
            return Err(Error::PresetMismatch {
                found: self.preset.to_string(),
                expected: preset.name.to_string(),
            });
        }
        if self.sweeps.len() != preset.history {
            return Err(Error::InvalidArgument(format!(
                "bundle holds {} sweeps, preset {} needs {}",
                self.sweeps.len(),
                preset.name,
                preset.history
            )));
        }
        let newest = self.sweeps.last().map_or(f64::NAN, |s| s.timestamp);
        if newest != self.timestamp || self.labels.timestamp != self.timestamp {
            return Err(Error::InvalidArgument(format!(
                "bundle timestamps disagree: frame {}, newest sweep {newest}, labels {}",
                self.timestamp, self.labels.timestamp
            )));
        }
        if (self.image.width, self.image.height) != (preset.camera.width, preset.camera.height) {
            return Err(Error::ShapeMismatch(format!(
                "image is {}x{}, camera is {}x{}",
                self.image.width, self.image.height, preset.camera.width, preset.camera.height
            )));
        }
        Ok(())
    }

    pub fn current_sweep(&self) -> &Sweep {
        self.sweeps.last().expect("bundle has at least one sweep")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payloads = [
            encode_points(&self.sweeps),
            encode_sweep_meta(&self.sweeps).into_bytes(),
            encode_map(&self.map).into_bytes(),
            encode_labels(&self.labels).into_bytes(),
            self.image.to_ppm(),
        ];
        let mut head = format!(
            "{MAGIC} {BUNDLE_VERSION}\npreset {}\nseed {}\nframe {}\ntimestamp {}\n",
            self.preset, self.seed, self.frame, self.timestamp
        );
        for (name, p) in SECTIONS.iter().zip(&payloads) {
            let _ = writeln!(head, "section {name} {} {:08x}", p.len(), crc32fast::hash(p));
        }
        head.push_str("end\n");
        let mut out = head.into_bytes();
        for p in &payloads {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, body_start) = split_header(bytes)?;
        let mut lines = header.lines();
        let first = lines.next().unwrap_or_default();
        let version = first
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::Parse(format!("not a frame bundle: `{first}`")))?;
        if version != BUNDLE_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: BUNDLE_VERSION,
            });
        }
        let mut preset = None;
        let mut seed = None;
        let mut frame = None;
        let mut timestamp = None;
        let mut sections: Vec<(String, usize, u32)> = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["preset", p] => preset = Some(p.parse::<PresetName>()?),
                ["seed", s] => seed = Some(parse_num::<u64>(s)?),
                ["frame", s] => frame = Some(parse_num::<usize>(s)?),
                ["timestamp", s] => timestamp = Some(parse_num::<f64>(s)?),
                ["section", name, len, crc] => {
                    let crc = u32::from_str_radix(crc, 16).map_err(|_| Error::Parse(format!("bad checksum `{crc}`")))?;
                    sections.push((name.to_string(), parse_num(len)?, crc));
                }
                ["end"] | [] => {}
                _ => return Err(Error::Parse(format!("unexpected header line `{line}`"))),
            }
        }
        let names: Vec<&str> = sections.iter().map(|s| s.0.as_str()).collect();
        if names != SECTIONS {
            return Err(Error::Parse(format!("bundle sections {names:?}, expected {SECTIONS:?}")));
        }
        let missing = |k: &str| Error::Parse(format!("bundle header lacks `{k}`"));
        let mut payloads = Vec::with_capacity(SECTIONS.len());
        let mut pos = body_start;
        for (name, len, crc) in &sections {
            let end = pos
                .checked_add(*len)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Truncated(format!("section `{name}` needs {len} bytes")))?;
            let p = &bytes[pos..end];
            if crc32fast::hash(p) != *crc {
                return Err(Error::Checksum { section: name.clone() });
            }
            payloads.push(p);
            pos = end;
        }
        if pos != bytes.len() {
            return Err(Error::Parse(format!("{} trailing bytes after the last section", bytes.len() - pos)));
        }
        let sweeps = decode_sweeps(payloads[0], text(payloads[1], "sweep_meta")?)?;
        Ok(Self {
            preset: preset.ok_or_else(|| missing("preset"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            frame: frame.ok_or_else(|| missing("frame"))?,
            timestamp: timestamp.ok_or_else(|| missing("timestamp"))?,
            sweeps,
            map: decode_map(text(payloads[2], "map")?)?,
            labels: decode_labels(text(payloads[3], "labels")?)?,
            image: Image::from_ppm(payloads[4])?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks the bundle against `preset`.
    pub fn load_for(path: &Path, preset: &Preset) -> Result<Self> {
        let b = Self::load(path)?;
        b.validate(preset)?;
        Ok(b)
    }
}

fn split_header(bytes: &[u8]) -> Result<(&str, usize)> {
    let marker = b"\nend\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .map(|i| i + marker.len())
        .ok_or_else(|| Error::Truncated("bundle header has no `end` line".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Parse("bundle header is not UTF-8".into()))?;
    Ok((header, end))
}

fn text<'a>(bytes: &'a [u8], section: &str) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|_| Error::Parse(format!("section `{section}` is not UTF-8")))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

fn encode_points(sweeps: &[Sweep]) -> Vec<u8> {
    let n: usize = sweeps.iter().map(|s| s.points.len()).sum();
    let mut out = Vec::with_capacity(n * POINT_FIELDS * 4);
    for s in sweeps {
        for p in &s.points {
            let rec = [p.x, p.y, p.z, p.range, p.intensity, p.azimuth, p.laser_id as f64];
            for v in rec {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

fn encode_sweep_meta(sweeps: &[Sweep]) -> String {
    let mut s = String::new();
    for sw in sweeps {
        let p = sw.ego_pose;
        let _ = writeln!(s, "sweep {} {} {} {} {}", sw.timestamp, p.tx, p.ty, p.yaw, sw.points.len());
    }
    s
}

fn decode_sweeps(points: &[u8], meta: &str) -> Result<Vec<Sweep>> {
    let rec = POINT_FIELDS * 4;
    if !points.len().is_multiple_of(rec) {
        return Err(Error::Truncated(format!("point payload of {} bytes is not whole records", points.len())));
    }
    let mut values = points.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let mut sweeps = Vec::new();
    let mut used = 0;
    for line in meta.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let ["sweep", t, tx, ty, yaw, n] = f.as_slice() else {
            return Err(Error::Parse(format!("bad sweep line `{line}`")));
        };
        let n: usize = parse_num(n)?;
        used += n;
        if used * rec > points.len() {
            return Err(Error::Truncated("sweep metadata lists more points than stored".into()));
        }
        let pts = (0..n)
            .map(|_| {
                let v: Vec<f64> = values.by_ref().take(POINT_FIELDS).collect();
                LidarPoint {
                    x: v[0],
                    y: v[1],
                    z: v[2],
                    range: v[3],
                    intensity: v[4],
                    azimuth: v[5],
                    laser_id: v[6] as u32,
                }
            })
            .collect();
        sweeps.push(Sweep {
            timestamp: parse_num(t)?,
            points: pts,
            ego_pose: Pose2::new(parse_num(tx)?, parse_num(ty)?, parse_num(yaw)?),
        });
    }
    if used * rec != points.len() {
        return Err(Error::Parse("point payload holds points not listed in the sweep metadata".into()));
    }
    Ok(sweeps)
}

fn encode_map(map: &MapGeometry) -> String {
    let mut s = String::new();
    for (layer, elems) in map.layers() {
        for e in elems {
            let kind = match e {
                MapElement::Polygon(_) => "polygon",
                MapElement::Polyline(_) => "polyline",
            };
            let _ = write!(s, "{} {kind}", layer.name());
            for p in e.points() {
                let _ = write!(s, " {} {}", p.x, p.y);
            }
            s.push('\n');
        }
    }
    s
}

fn decode_map(text: &str) -> Result<MapGeometry> {
    let mut map = MapGeometry::empty();
    for line in text.lines() {
        let mut f = line.split_whitespace();
        let layer: MapLayer = f.next().unwrap_or_default().parse()?;
        let kind = f.next().unwrap_or_default();
        let nums = f.map(parse_num::<f64>).collect::<Result<Vec<_>>>()?;
        if nums.len() % 2 != 0 {
            return Err(Error::Parse(format!("odd coordinate count in map line `{line}`")));
        }
        let pts = nums.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect();
        let elem = match kind {
            "polygon" => MapElement::Polygon(pts),
            "polyline" => MapElement::Polyline(pts),
            _ => return Err(Error::Parse(format!("unknown map element `{kind}`"))),
        };
        map.push(layer, elem);
    }
    Ok(map)
}

fn encode_labels(labels: &LabelSet) -> String {
    let mut s = format!("labels {} {}\n", labels.timestamp, labels.horizon);
    for a in &labels.actors {
        let b = a.bbox;
        let _ = write!(
            s,
            "actor {} {} {} {} {} {} {} {}",
            a.id, a.class, b.cx, b.cy, b.length, b.width, b.heading, a.height
        );
        for w in &a.waypoints {
            let _ = write!(s, " {} {} {}", w.cx, w.cy, w.heading);
        }
        s.push('\n');
    }
    s
}

fn decode_labels(text: &str) -> Result<LabelSet> {
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap_or_default().split_whitespace().collect();
    let ["labels", t, h] = head.as_slice() else {
        return Err(Error::Parse("labels section lacks its header line".into()));
    };
    let mut set = LabelSet::empty(parse_num(t)?, parse_num(h)?);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 9 || f[0] != "actor" {
            return Err(Error::Parse(format!("bad label line `{line}`")));
        }
        let class: ActorClass = f[2].parse()?;
        let v = f[3..].iter().map(|s| parse_num::<f64>(s)).collect::<Result<Vec<_>>>()?;
        if (v.len() - 6) != 3 * set.horizon {
            return Err(Error::Parse(format!("label line has {} waypoint values", v.len() - 6)));
        }
        set.actors.push(ActorLabel {
            id: parse_num(f[1])?,
            class,
            bbox: RotatedBox2D::new(v[0], v[1], v[2], v[3], v[4])?,
            height: v[5],
            waypoints: v[6..]
                .chunks_exact(3)
                .map(|w| Waypoint {
                    cx: w[0],
                    cy: w[1],
                    heading: w[2],
                })
                .collect(),
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_round_trip_is_bit_identical() {
        let preset = Preset::desk();
        let b = generate_bundle(&preset, 7, 0).unwrap();
        b.validate(&preset).unwrap();
        let bytes = b.to_bytes();
        let back = FrameBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_detected() {
        let preset = Preset::desk();
        let bytes = generate_bundle(&preset, 1, 2).unwrap().to_bytes();
        assert!(matches!(
            FrameBundle::from_bytes(&bytes[..bytes.len() - 10]),
            Err(Error::Truncated(_))
        ));
        let mut flipped = bytes.clone();
        let n = flipped.len();
        flipped[n - 5] ^= 0x40;
        assert!(matches!(FrameBundle::from_bytes(&flipped), Err(Error::Checksum { .. })));
        let mut v2 = bytes.clone();
        assert_eq!(&v2[..17], b"mvfusion-bundle 1");
        v2[16] = b'2';
        assert!(matches!(FrameBundle::from_bytes(&v2), Err(Error::VersionMismatch { found: 2, .. })));
    }

    #[test]
    fn preset_mismatch() {
        let b = generate_bundle(&Preset::desk(), 3, 0).unwrap();
        assert!(matches!(b.validate(&Preset::atg4d()), Err(Error::PresetMismatch { .. })));
    }
}
