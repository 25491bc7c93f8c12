//! Slow reference implementations used by the self-check suite and tests.
//!
//! Each one follows the textbook definition with no shortcuts, so agreement
//! with the fast path is evidence rather than tautology.

use rand::Rng;

use crate::error::Result;
use crate::geometry::{Point2, RotatedBox2D};
use crate::nn::{CellOutputs, ConvLayerSpec};
use crate::objectives::{total_loss, CellTargets, LossParams};
use crate::projection::{CellIndex, Projector};
use crate::raster::{FeatureMap, ViewGeometry};
use crate::scene::LidarPoint;

/// Point-pooled projection as a double loop over target cells and points:
/// f_j = (1/|N_j|) Σ_{i ∈ N_j} f_src(i), with N_j the points landing in cell j
/// that also have a source cell. Empty cells get zeros and validity −1.
pub fn eq1_brute_force(
    source: &FeatureMap,
    source_view: &ViewGeometry,
    points: &[LidarPoint],
    target: &ViewGeometry,
) -> (FeatureMap, FeatureMap) {
    let (th, tw) = target.dims();
    let ch = source.channels;
    let located: Vec<(Option<CellIndex>, Option<CellIndex>)> =
        points.iter().map(|p| (target.project(p), source_view.project(p))).collect();
    let mut out = FeatureMap::zeros(target.tag(), th, tw, ch);
    let mut valid = FeatureMap::filled(target.tag(), th, tw, 1, -1.0);
    for row in 0..th {
        for col in 0..tw {
            let mut sum = vec![0.0f64; ch];
            let mut n = 0usize;
            for (t, s) in &located {
                let (Some(t), Some(s)) = (t, s) else { continue };
                if t.row != row || t.col != col {
                    continue;
                }
                n += 1;
                for (k, acc) in sum.iter_mut().enumerate() {
                    *acc += source.get(s.row, s.col, k) as f64;
                }
            }
            if n > 0 {
                valid.set(row, col, 0, 1.0);
                for (k, acc) in sum.iter().enumerate() {
                    out.set(row, col, k, (acc / n as f64) as f32);
                }
            }
        }
    }
    (out, valid)
}

/// 3×3 zero-padded strided cross-correlation written straight from the
/// definition; bias first, then taps in (ky, kx, ci) order.
pub fn naive_conv2d(input: &FeatureMap, spec: &ConvLayerSpec, kernel: &[f32], bias: &[f32]) -> FeatureMap {
    let (oh, ow) = spec.output_size(input.height, input.width);
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let mut out = FeatureMap::zeros(input.view, oh, ow, cout);
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut acc = bias[co] as f64;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let iy = (oy * spec.stride.0 + ky) as isize - 1;
                        let ix = (ox * spec.stride.1 + kx) as isize - 1;
                        for ci in 0..cin {
                            let x = if iy < 0 || ix < 0 || iy >= input.height as isize || ix >= input.width as isize {
                                0.0
                            } else {
                                input.get(iy as usize, ix as usize, ci) as f64
                            };
                            let w = kernel[((ky * 3 + kx) * cin + ci) * cout + co] as f64;
                            acc += x * w;
                        }
                    }
                }
                if spec.relu {
                    acc = acc.max(0.0);
                }
                out.set(oy, ox, co, acc as f32);
            }
        }
    }
    out
}

/// IoU estimated from `samples` uniform points in the joint bounding rectangle.
pub fn monte_carlo_iou<R: Rng>(a: &RotatedBox2D, b: &RotatedBox2D, samples: usize, rng: &mut R) -> f64 {
    let corners: Vec<Point2> = a.corners().into_iter().chain(b.corners()).collect();
    let x0 = corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x1 = corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y0 = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y1 = corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..samples {
        let p = Point2::new(rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        let (ia, ib) = (a.contains(p), b.contains(p));
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

/// Central differences of the total loss with respect to every output value.
pub fn finite_difference_gradient(
    outputs: &CellOutputs,
    targets: &CellTargets,
    params: &LossParams,
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = outputs.clone();
    let mut grad = vec![0.0; outputs.data.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let x = outputs.data[i];
        probe.data[i] = x + step;
        let up = total_loss(&probe, targets, params)?.total;
        probe.data[i] = x - step;
        let down = total_loss(&probe, targets, params)?.total;
        probe.data[i] = x;
        *g = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn monte_carlo_on_identical_boxes() {
        let b = RotatedBox2D::new(1.0, 2.0, 3.0, 1.0, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(monte_carlo_iou(&b, &b, 10_000, &mut rng), 1.0);
    }
}
