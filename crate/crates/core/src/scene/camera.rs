use crate::error::{Error, Result};
use crate::projection::CameraModel;

use super::raycast::{cast, HitKind};
use super::Scene;

pub const SKY: [u8; 3] = [135, 206, 235];

/// Interleaved 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Drops the top `rows` rows.
    pub fn crop_top(&self, rows: usize) -> Image {
        let rows = rows.min(self.height);
        Image {
            width: self.width,
            height: self.height - rows,
            data: self.data[3 * rows * self.width..].to_vec(),
        }
    }

    /// Binary portable pixmap (P6, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Image> {
        // header: magic, width, height, maxval separated by whitespace, then one whitespace byte
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Truncated("PPM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(Error::Parse("expected binary PPM with maxval 255".into()));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("PPM size: {e}")));
        let (width, height) = (parse(&fields[1])?, parse(&fields[2])?);
        let need = width * height * 3;
        if bytes.len() < pos + need {
            return Err(Error::Truncated(format!("PPM body needs {need} bytes")));
        }
        Ok(Image {
            width,
            height,
            data: bytes[pos..pos + need].to_vec(),
        })
    }
}

/// Nearest-hit depth shading of actor boxes; background pixels are sky.
/// Renders the full sensor frame; cropping happens downstream.
pub fn render_camera(scene: &Scene, camera: &CameraModel, t: f64) -> Result<Image> {
    let targets = scene.targets_in_ego(t)?;
    let mut img = Image::filled(camera.width, camera.height, SKY);
    if targets.is_empty() {
        return Ok(img);
    }
    for row in 0..camera.height {
        for col in 0..camera.width {
            let (origin, dir) = camera.pixel_ray(row as f64 + 0.5, col as f64 + 0.5);
            if let Some(hit) = cast(origin, dir, &targets, false, f64::INFINITY) {
                let HitKind::Actor(i) = hit.kind else { continue };
                let base = targets[i].class.base_color();
                let shade = (0.3 + 0.7 * hit.cos_incidence) / (1.0 + hit.distance / 40.0);
                img.set_pixel(row, col, base.map(|c| (c as f64 * shade).round() as u8));
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose2, RotatedBox2D};
    use crate::scene::{build_scene, Actor, ActorClass, MotionSegment, SceneConfig};

    fn cam() -> CameraModel {
        CameraModel::from_fov(320, 200, 90.0, 0, Pose2::identity(), 1.0).unwrap()
    }

    fn bare_scene() -> Scene {
        let cfg = SceneConfig {
            vehicles: 0,
            pedestrians: 0,
            bicyclists: 0,
            ego_speed: 0.0,
            ..Default::default()
        };
        build_scene(&cfg, 1).unwrap()
    }

    #[test]
    fn empty_scene_is_sky() {
        let img = render_camera(&bare_scene(), &cam(), 0.0).unwrap();
        assert!(img.data.chunks(3).all(|p| p == SKY));
    }

    #[test]
    fn on_axis_box_footprint() {
        let mut s = bare_scene();
        let (w, d, l) = (2.0, 10.0, 4.0);
        let b = RotatedBox2D::new(d + 0.5 * l, 0.0, l, w, 0.0).unwrap();
        let seg = MotionSegment {
            duration: s.duration(),
            speed: 0.0,
            turn_rate: 0.0,
        };
        s.actors.push(Actor::new(0, ActorClass::Vehicle, b, 2.0, vec![seg]).unwrap());
        let c = cam();
        let img = render_camera(&s, &c, 0.0).unwrap();
        let (pr, pc) = (c.cy.floor() as usize, c.cx.floor() as usize);
        assert_ne!(img.pixel(pr, pc), SKY);
        // contiguous run through the principal pixel
        let mut lo = pc;
        while lo > 0 && img.pixel(pr, lo - 1) != SKY {
            lo -= 1;
        }
        let mut hi = pc;
        while hi + 1 < img.width && img.pixel(pr, hi + 1) != SKY {
            hi += 1;
        }
        let width_px = (hi - lo + 1) as f64;
        let expect = c.fx * w / d;
        assert!((width_px - expect).abs() <= 2.0, "{width_px} vs {expect}");
        assert_eq!(img, render_camera(&s, &c, 0.0).unwrap());
    }

    #[test]
    fn ppm_roundtrip_and_crop() {
        let mut img = Image::filled(4, 3, [1, 2, 3]);
        img.set_pixel(2, 3, [9, 9, 9]);
        assert_eq!(Image::from_ppm(&img.to_ppm()).unwrap(), img);
        let c = img.crop_top(2);
        assert_eq!((c.width, c.height), (4, 1));
        assert_eq!(c.pixel(0, 3), [9, 9, 9]);
        let bytes = img.to_ppm();
        assert!(Image::from_ppm(&bytes[..bytes.len() - 1]).is_err());
    }
}
