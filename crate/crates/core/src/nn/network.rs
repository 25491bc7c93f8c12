use crate::error::{Error, Result};
use crate::projection::project_features;
use crate::raster::{FeatureMap, ViewGeometry, ViewTag};
use crate::scene::{Image, LidarPoint};

use super::conv::{add, conv2d_forward, conv_transpose_h2, relu_in_place, ConvLayerSpec};
use super::outputs::{logistic, CellOutputs, OutputLayout};
use super::weights::NetworkWeights;

/// Widths and strides of the fusion network. Every value is configurable;
/// the defaults are sized for desk-scale runs.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Camera sub-net plus its projection into the RV branch. Turning it
    /// off only narrows the U-net entry layer.
    pub use_camera: bool,
    /// Channels of the stacked LiDAR occupancy (history × height layers).
    pub bev_in: usize,
    pub map_in: usize,
    pub rv_in: usize,
    /// Camera widths per stride level; layers come in pairs of (stride 1, stride 2).
    pub camera_widths: [usize; 3],
    pub rv_width: usize,
    pub bev_width: usize,
    pub head_width: usize,
    /// 1, 2 or 4.
    pub output_stride: usize,
    pub horizon: usize,
    pub classes: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            use_camera: true,
            bev_in: 160,
            map_in: 7,
            rv_in: 4,
            camera_widths: [16, 32, 64],
            rv_width: 32,
            bev_width: 64,
            head_width: 64,
            output_stride: 4,
            horizon: 30,
            classes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv(ConvLayerSpec),
    /// 1×4 horizontal transposed convolution, stride 2.
    Deconv { in_channels: usize, out_channels: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDef {
    pub name: String,
    pub kind: LayerKind,
}

impl NetConfig {
    pub fn camera_out(&self) -> usize {
        self.camera_widths[2]
    }

    /// Input width of the U-net entry layer.
    pub fn rv_concat_width(&self) -> usize {
        if self.use_camera {
            self.rv_width + self.camera_out() + 1
        } else {
            self.rv_width
        }
    }

    /// BEV features + projected RV features + RV validity.
    pub fn fused_width(&self) -> usize {
        self.bev_width + self.rv_width + 1
    }

    pub fn head_out(&self) -> usize {
        self.classes * OutputLayout::new(self.horizon).per_class()
    }

    fn head_strides(&self) -> Result<[usize; 5]> {
        match self.output_stride {
            1 => Ok([1, 1, 1, 1, 1]),
            2 => Ok([1, 2, 1, 1, 1]),
            4 => Ok([1, 2, 1, 2, 1]),
            s => Err(Error::InvalidArgument(format!("output stride {s} not in {{1, 2, 4}}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.head_strides()?;
        let widths = [
            self.bev_in,
            self.map_in,
            self.rv_in,
            self.rv_width,
            self.bev_width,
            self.head_width,
            self.classes,
        ];
        if widths.contains(&0) || self.camera_widths.contains(&0) {
            return Err(Error::InvalidArgument("network widths must be positive".into()));
        }
        Ok(())
    }

    /// Every parameterized layer in forward order.
    pub fn layers(&self) -> Vec<LayerDef> {
        let mut v = Vec::new();
        let mut conv = |name: &str, spec: ConvLayerSpec| {
            v.push(LayerDef {
                name: name.to_string(),
                kind: LayerKind::Conv(spec),
            })
        };
        let [c1, c2, c3] = self.camera_widths;
        let cam = [(3, c1, 1), (c1, c1, 2), (c1, c2, 1), (c2, c2, 2), (c2, c3, 1), (c3, c3, 2)];
        for (i, (a, b, s)) in cam.into_iter().enumerate() {
            conv(&format!("camera.conv{}", i + 1), ConvLayerSpec::new(a, b, s, true));
        }
        let r = self.rv_width;
        conv("rv.conv1", ConvLayerSpec::new(self.rv_in, r, 1, true));
        conv("rv.conv2", ConvLayerSpec::new(r, r, 1, true));
        conv("rv.unet.entry", ConvLayerSpec::new(self.rv_concat_width(), r, 1, true));
        conv("rv.unet.l1.a", ConvLayerSpec::new(r, r, 1, true));
        conv("rv.unet.l1.b", ConvLayerSpec::new(r, r, 1, false));
        conv("rv.unet.down", ConvLayerSpec::new(r, 2 * r, 1, true).with_stride(1, 2));
        conv("rv.unet.l2.a", ConvLayerSpec::new(2 * r, 2 * r, 1, true));
        conv("rv.unet.l2.b", ConvLayerSpec::new(2 * r, 2 * r, 1, false));
        let b = self.bev_width;
        conv("bev.lidar.conv1", ConvLayerSpec::new(self.bev_in, b, 1, true));
        conv("bev.lidar.conv2", ConvLayerSpec::new(b, b, 1, true));
        conv("bev.map.conv1", ConvLayerSpec::new(self.map_in, b, 1, true));
        conv("bev.map.conv2", ConvLayerSpec::new(b, b, 1, true));
        let strides = self.head_strides().unwrap_or([1; 5]);
        let h = self.head_width;
        for (i, s) in strides.into_iter().enumerate() {
            let cin = if i == 0 { self.fused_width() } else { h };
            conv(&format!("head.conv{}", i + 1), ConvLayerSpec::new(cin, h, s, true));
        }
        conv("head.out", ConvLayerSpec::new(h, self.head_out(), 1, false));
        v.insert(
            v.iter().position(|l| l.name == "rv.unet.l2.b").unwrap() + 1,
            LayerDef {
                name: "rv.unet.up".into(),
                kind: LayerKind::Deconv {
                    in_channels: 2 * r,
                    out_channels: r,
                },
            },
        );
        v.insert(
            v.iter().position(|l| l.name == "rv.unet.up").unwrap() + 1,
            LayerDef {
                name: "rv.unet.fuse".into(),
                kind: LayerKind::Conv(ConvLayerSpec::new(2 * r, r, 1, true)),
            },
        );
        v
    }

    fn conv_spec(&self, name: &str) -> ConvLayerSpec {
        match self.layers().into_iter().find(|l| l.name == name).map(|l| l.kind) {
            Some(LayerKind::Conv(s)) => s,
            _ => unreachable!("unknown conv layer {name}"),
        }
    }
}

/// Closed-form (height, width, channels) of every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapePlan {
    pub camera_features: (usize, usize, usize),
    pub rv_embedding: (usize, usize, usize),
    pub rv_concat: (usize, usize, usize),
    pub unet_level1: (usize, usize, usize),
    pub unet_level2: (usize, usize, usize),
    pub rv_features: (usize, usize, usize),
    pub bev_features: (usize, usize, usize),
    pub fused: (usize, usize, usize),
    pub outputs: (usize, usize, usize),
}

impl ShapePlan {
    /// `camera` is the cropped image size (height, width).
    pub fn compute(config: &NetConfig, bev: (usize, usize), rv: (usize, usize), camera: (usize, usize)) -> Self {
        let c8 = |n: usize| n.div_ceil(2).div_ceil(2).div_ceil(2);
        let s = config.output_stride;
        let down = |n: usize| match s {
            1 => n,
            2 => n.div_ceil(2),
            _ => n.div_ceil(2).div_ceil(2),
        };
        let r = config.rv_width;
        Self {
            camera_features: (c8(camera.0), c8(camera.1), config.camera_out()),
            rv_embedding: (rv.0, rv.1, r),
            rv_concat: (rv.0, rv.1, config.rv_concat_width()),
            unet_level1: (rv.0, rv.1, r),
            unet_level2: (rv.0, rv.1.div_ceil(2), 2 * r),
            rv_features: (rv.0, rv.1, r),
            bev_features: (bev.0, bev.1, config.bev_width),
            fused: (bev.0, bev.1, config.fused_width()),
            outputs: (down(bev.0), down(bev.1), config.head_out()),
        }
    }
}

/// Intermediate maps of the RV branch.
#[derive(Debug, Clone)]
pub struct RvTrace {
    pub embedding: FeatureMap,
    pub concat: FeatureMap,
    pub level1: FeatureMap,
    pub level2: FeatureMap,
    pub output: FeatureMap,
}

/// Tensors a forward pass consumes, all in the current ego frame.
#[derive(Debug, Clone)]
pub struct NetInputs<'a> {
    pub lidar_bev: &'a FeatureMap,
    pub map_raster: &'a FeatureMap,
    /// Must carry its RV geometry.
    pub rv_image: &'a FeatureMap,
    /// Cropped image and the view geometry of the camera-net output.
    pub camera: Option<(&'a Image, ViewGeometry)>,
    /// Current sweep, used for every cross-view projection.
    pub points: &'a [LidarPoint],
}

/// Weights bound to a validated topology.
#[derive(Debug, Clone)]
pub struct FusionNet {
    pub config: NetConfig,
    pub weights: NetworkWeights,
}

/// RGB bytes scaled to [0, 1].
pub fn image_features(image: &Image) -> FeatureMap {
    let data = image.data.iter().map(|&b| b as f32 / 255.0).collect();
    FeatureMap {
        view: ViewTag::Camera,
        height: image.height,
        width: image.width,
        channels: 3,
        data,
        geometry: None,
    }
}

impl FusionNet {
    pub fn new(config: NetConfig, weights: NetworkWeights) -> Result<Self> {
        config.validate()?;
        weights.validate(&config)?;
        Ok(Self { config, weights })
    }

    pub fn seeded(config: NetConfig, seed: u64) -> Result<Self> {
        let w = NetworkWeights::seeded(&config, seed);
        Self::new(config, w)
    }

    fn conv(&self, name: &str, x: &FeatureMap) -> Result<FeatureMap> {
        let (k, b) = self.weights.layer(name)?;
        conv2d_forward(x, &self.config.conv_spec(name), k, b)
    }

    fn residual(&self, prefix: &str, x: &FeatureMap) -> Result<FeatureMap> {
        let a = self.conv(&format!("{prefix}.a"), x)?;
        let b = self.conv(&format!("{prefix}.b"), &a)?;
        let mut y = add(x, &b)?;
        relu_in_place(&mut y);
        Ok(y)
    }

    /// Six 3×3 convs, stride 2 on layers 2, 4 and 6.
    pub fn camera_net_forward(&self, image: &Image) -> Result<FeatureMap> {
        let mut x = image_features(image);
        for i in 1..=6 {
            x = self.conv(&format!("camera.conv{i}"), &x)?;
        }
        Ok(x)
    }

    pub fn rv_branch_forward(
        &self,
        rv_image: &FeatureMap,
        camera_features: Option<&FeatureMap>,
        points: &[LidarPoint],
    ) -> Result<FeatureMap> {
        Ok(self.rv_branch_trace(rv_image, camera_features, points)?.output)
    }

    pub fn rv_branch_trace(
        &self,
        rv_image: &FeatureMap,
        camera_features: Option<&FeatureMap>,
        points: &[LidarPoint],
    ) -> Result<RvTrace> {
        let geometry = match &rv_image.geometry {
            Some(g @ ViewGeometry::Rv(spec)) => {
                if spec.rows != rv_image.height || spec.cols != rv_image.width {
                    return Err(Error::ShapeMismatch(format!(
                        "RV image is {}x{} but the RV spec is {}x{}",
                        rv_image.height, rv_image.width, spec.rows, spec.cols
                    )));
                }
                g.clone()
            }
            _ => return Err(Error::InvalidArgument("RV image carries no RV geometry".into())),
        };
        let x = self.conv("rv.conv1", rv_image)?;
        let embedding = self.conv("rv.conv2", &x)?;
        let concat = if self.config.use_camera {
            let cam = camera_features
                .ok_or_else(|| Error::InvalidArgument("camera branch enabled but no camera features given".into()))?;
            if cam.channels != self.config.camera_out() {
                return Err(Error::ShapeMismatch(format!(
                    "camera features have {} channels, expected {}",
                    cam.channels,
                    self.config.camera_out()
                )));
            }
            let (proj, valid) = project_features(cam, points, &geometry)?;
            FeatureMap::concat_channels(&[&embedding, &proj, &valid])?
        } else {
            embedding.clone()
        };
        let e = self.conv("rv.unet.entry", &concat)?;
        let level1 = self.residual("rv.unet.l1", &e)?;
        let d = self.conv("rv.unet.down", &level1)?;
        let level2 = self.residual("rv.unet.l2", &d)?;
        let (k, b) = self.weights.layer("rv.unet.up")?;
        let up = conv_transpose_h2(&level2, self.config.rv_width, k, b, level1.width, true)?;
        let skip = FeatureMap::concat_channels(&[&up, &level1])?;
        let output = self.conv("rv.unet.fuse", &skip)?.with_geometry(geometry);
        Ok(RvTrace {
            embedding,
            concat,
            level1,
            level2,
            output,
        })
    }

    pub fn lidar_embedding(&self, lidar_bev: &FeatureMap) -> Result<FeatureMap> {
        let x = self.conv("bev.lidar.conv1", lidar_bev)?;
        self.conv("bev.lidar.conv2", &x)
    }

    pub fn map_embedding(&self, map_raster: &FeatureMap) -> Result<FeatureMap> {
        let x = self.conv("bev.map.conv1", map_raster)?;
        self.conv("bev.map.conv2", &x)
    }

    /// Sum of the LiDAR and map embeddings.
    pub fn bev_branch_forward(&self, lidar_bev: &FeatureMap, map_raster: &FeatureMap) -> Result<FeatureMap> {
        if (lidar_bev.height, lidar_bev.width) != (map_raster.height, map_raster.width) {
            return Err(Error::ShapeMismatch(format!(
                "LiDAR grid {}x{} differs from map grid {}x{}",
                lidar_bev.height, lidar_bev.width, map_raster.height, map_raster.width
            )));
        }
        let mut out = add(&self.lidar_embedding(lidar_bev)?, &self.map_embedding(map_raster)?)?;
        out.geometry = lidar_bev.geometry.clone().or_else(|| map_raster.geometry.clone());
        Ok(out)
    }

    pub fn fuse_and_head_forward(
        &self,
        bev_features: &FeatureMap,
        rv_in_bev: &FeatureMap,
        rv_validity: &FeatureMap,
    ) -> Result<CellOutputs> {
        let dims = (bev_features.height, bev_features.width);
        if dims != (rv_in_bev.height, rv_in_bev.width) || dims != (rv_validity.height, rv_validity.width) {
            return Err(Error::ShapeMismatch(format!(
                "fusion inputs disagree on the BEV grid: {:?}, {:?}, {:?}",
                bev_features.shape(),
                rv_in_bev.shape(),
                rv_validity.shape()
            )));
        }
        let mut x = FeatureMap::concat_channels(&[bev_features, rv_in_bev, rv_validity])?;
        for i in 1..=5 {
            x = self.conv(&format!("head.conv{i}"), &x)?;
        }
        let raw = self.conv("head.out", &x)?;
        Ok(self.to_outputs(&raw))
    }

    fn to_outputs(&self, raw: &FeatureMap) -> CellOutputs {
        let layout = OutputLayout::new(self.config.horizon);
        let per = layout.per_class();
        let mut data: Vec<f64> = raw.data.iter().map(|&v| v as f64).collect();
        for block in data.chunks_exact_mut(per) {
            block[OutputLayout::P] = logistic(block[OutputLayout::P]);
        }
        CellOutputs {
            rows: raw.height,
            cols: raw.width,
            classes: self.config.classes,
            horizon: self.config.horizon,
            data,
        }
    }

    /// Full forward pass. The BEV grid is taken from the LiDAR stack's geometry.
    pub fn forward(&self, inputs: &NetInputs<'_>) -> Result<CellOutputs> {
        let grid = match &inputs.lidar_bev.geometry {
            Some(g @ ViewGeometry::Bev(_)) => g.clone(),
            _ => return Err(Error::InvalidArgument("LiDAR stack carries no BEV geometry".into())),
        };
        let camera = match (&inputs.camera, self.config.use_camera) {
            (Some((image, view)), true) => Some(self.camera_net_forward(image)?.with_geometry(view.clone())),
            (None, true) => return Err(Error::InvalidArgument("camera branch enabled but no image given".into())),
            (_, false) => None,
        };
        let rv = self.rv_branch_forward(inputs.rv_image, camera.as_ref(), inputs.points)?;
        let (rv_bev, rv_valid) = project_features(&rv, inputs.points, &grid)?;
        let bev = self.bev_branch_forward(inputs.lidar_bev, inputs.map_raster)?;
        self.fuse_and_head_forward(&bev, &rv_bev, &rv_valid)
    }
}
