use crate::error::{Error, Result};
use crate::raster::FeatureMap;

/// 3×3 convolution with "same" zero padding (1 px), per-axis stride and an
/// optional rectifier. Output size is ⌈input / stride⌉ on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// (vertical, horizontal)
    pub stride: (usize, usize),
    pub relu: bool,
}

impl ConvLayerSpec {
    pub const KERNEL: usize = 3;

    pub fn new(in_channels: usize, out_channels: usize, stride: usize, relu: bool) -> Self {
        Self {
            in_channels,
            out_channels,
            stride: (stride, stride),
            relu,
        }
    }

    pub fn with_stride(mut self, vertical: usize, horizontal: usize) -> Self {
        self.stride = (vertical, horizontal);
        self
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        (height.div_ceil(self.stride.0), width.div_ceil(self.stride.1))
    }

    /// Kernel layout is [ky][kx][in][out].
    pub fn kernel_len(&self) -> usize {
        Self::KERNEL * Self::KERNEL * self.in_channels * self.out_channels
    }

    pub fn fan_in(&self) -> usize {
        Self::KERNEL * Self::KERNEL * self.in_channels
    }

    pub fn fan_out(&self) -> usize {
        Self::KERNEL * Self::KERNEL * self.out_channels
    }
}

fn check_params(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch(format!("{name}: expected {want} values, got {got}")));
    }
    Ok(())
}

/// Cross-correlation, accumulated in f64 per output value in (ky, kx, in) order.
pub fn conv2d_forward(input: &FeatureMap, layer: &ConvLayerSpec, kernel: &[f32], bias: &[f32]) -> Result<FeatureMap> {
    if input.channels != layer.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} input channels, got {}",
            layer.in_channels, input.channels
        )));
    }
    if layer.stride.0 == 0 || layer.stride.1 == 0 {
        return Err(Error::InvalidArgument("conv stride must be positive".into()));
    }
    check_params("conv kernel", kernel.len(), layer.kernel_len())?;
    check_params("conv bias", bias.len(), layer.out_channels)?;

    let (h, w, cin, cout) = (input.height, input.width, layer.in_channels, layer.out_channels);
    let (oh, ow) = layer.output_size(h, w);
    let (sy, sx) = layer.stride;
    let k64: Vec<f64> = kernel.iter().map(|&v| v as f64).collect();
    let b64: Vec<f64> = bias.iter().map(|&v| v as f64).collect();
    let mut out = FeatureMap::zeros(input.view, oh, ow, cout);
    let mut acc = vec![0.0f64; cout];
    for oy in 0..oh {
        for ox in 0..ow {
            acc.copy_from_slice(&b64);
            for ky in 0..3 {
                let iy = (oy * sy + ky) as isize - 1;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let ix = (ox * sx + kx) as isize - 1;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let x = input.cell(iy as usize, ix as usize);
                    let tap = &k64[(ky * 3 + kx) * cin * cout..(ky * 3 + kx + 1) * cin * cout];
                    for (ci, &xv) in x.iter().enumerate() {
                        // skipping exact zeros leaves every sum bit-identical
                        if xv == 0.0 {
                            continue;
                        }
                        let xv = xv as f64;
                        for (a, &wv) in acc.iter_mut().zip(&tap[ci * cout..(ci + 1) * cout]) {
                            *a += xv * wv;
                        }
                    }
                }
            }
            let dst = out.cell_mut(oy, ox);
            for (d, &a) in dst.iter_mut().zip(&acc) {
                let v = if layer.relu { a.max(0.0) } else { a };
                *d = v as f32;
            }
        }
    }
    if layer.stride == (1, 1) {
        out.geometry = input.geometry.clone();
    }
    Ok(out)
}

/// Horizontal-only transposed convolution: kernel 1×4, stride 2, padding 1,
/// so the width doubles. The result is cropped to `out_width` (≤ 2·width).
/// Kernel layout is [k][in][out].
pub fn conv_transpose_h2(
    input: &FeatureMap,
    out_channels: usize,
    kernel: &[f32],
    bias: &[f32],
    out_width: usize,
    relu: bool,
) -> Result<FeatureMap> {
    let (h, w, cin) = (input.height, input.width, input.channels);
    check_params("deconv kernel", kernel.len(), 4 * cin * out_channels)?;
    check_params("deconv bias", bias.len(), out_channels)?;
    if out_width > 2 * w {
        return Err(Error::ShapeMismatch(format!("deconv cannot widen {w} to {out_width}")));
    }
    let full = 2 * w;
    let mut acc = vec![0.0f64; h * full * out_channels];
    for cell in acc.chunks_exact_mut(out_channels) {
        for (a, &b) in cell.iter_mut().zip(bias) {
            *a = b as f64;
        }
    }
    for y in 0..h {
        for i in 0..w {
            let x = input.cell(y, i);
            for k in 0..4 {
                let ox = (2 * i + k) as isize - 1;
                if ox < 0 || ox >= full as isize {
                    continue;
                }
                let base = (y * full + ox as usize) * out_channels;
                for (ci, &xv) in x.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &kernel[(k * cin + ci) * out_channels..(k * cin + ci + 1) * out_channels];
                    for (a, &wv) in acc[base..base + out_channels].iter_mut().zip(wrow) {
                        *a += xv as f64 * wv as f64;
                    }
                }
            }
        }
    }
    let mut out = FeatureMap::zeros(input.view, h, out_width, out_channels);
    for y in 0..h {
        for x in 0..out_width {
            let src = &acc[(y * full + x) * out_channels..(y * full + x + 1) * out_channels];
            for (d, &a) in out.cell_mut(y, x).iter_mut().zip(src) {
                *d = if relu { a.max(0.0) } else { a } as f32;
            }
        }
    }
    Ok(out)
}

/// Elementwise sum of same-shape maps.
pub fn add(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("add {:?} and {:?}", a.shape(), b.shape())));
    }
    let mut out = a.clone();
    for (o, &v) in out.data.iter_mut().zip(&b.data) {
        *o += v;
    }
    Ok(out)
}

pub fn relu_in_place(fm: &mut FeatureMap) {
    for v in &mut fm.data {
        *v = v.max(0.0);
    }
}
