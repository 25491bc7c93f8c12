use crate::error::{Error, Result};

/// Channel layout of one class block in [`CellOutputs`].
///
/// `[p, l, w, (cx_0, cy_0) .. (cx_H, cy_H), (sin_0, cos_0) .. (sin_H, cos_H)]`,
/// where the centers are offsets from the cell center in meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputLayout {
    pub horizon: usize,
}

impl OutputLayout {
    pub const P: usize = 0;
    pub const LENGTH: usize = 1;
    pub const WIDTH: usize = 2;

    pub fn new(horizon: usize) -> Self {
        Self { horizon }
    }

    pub fn per_class(&self) -> usize {
        3 + 4 * (self.horizon + 1)
    }

    pub fn center_x(&self, h: usize) -> usize {
        3 + 2 * h
    }

    pub fn center_y(&self, h: usize) -> usize {
        4 + 2 * h
    }

    pub fn sin(&self, h: usize) -> usize {
        3 + 2 * (self.horizon + 1) + 2 * h
    }

    pub fn cos(&self, h: usize) -> usize {
        4 + 2 * (self.horizon + 1) + 2 * h
    }
}

/// Per-cell network outputs on the output lattice, one block per class.
///
/// Probabilities are stored already squashed; every other channel is raw.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutputs {
    pub rows: usize,
    pub cols: usize,
    pub classes: usize,
    pub horizon: usize,
    /// `[row][col][class][channel]`
    pub data: Vec<f64>,
}

impl CellOutputs {
    /// All regression channels zero, every probability 0.5.
    pub fn neutral(rows: usize, cols: usize, classes: usize, horizon: usize) -> Self {
        let layout = OutputLayout::new(horizon);
        let mut data = vec![0.0; rows * cols * classes * layout.per_class()];
        for block in data.chunks_exact_mut(layout.per_class()) {
            block[OutputLayout::P] = 0.5;
        }
        Self {
            rows,
            cols,
            classes,
            horizon,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, classes: usize, horizon: usize, data: Vec<f64>) -> Result<Self> {
        let out = Self {
            rows,
            cols,
            classes,
            horizon,
            data,
        };
        if out.data.len() != rows * cols * out.channels() {
            return Err(Error::ShapeMismatch(format!(
                "cell outputs {rows}x{cols}x{} need {} values, got {}",
                out.channels(),
                rows * cols * out.channels(),
                out.data.len()
            )));
        }
        out.validate()?;
        Ok(out)
    }

    pub fn layout(&self) -> OutputLayout {
        OutputLayout::new(self.horizon)
    }

    /// Channels per cell over all classes.
    pub fn channels(&self) -> usize {
        self.classes * self.layout().per_class()
    }

    pub fn offset(&self, row: usize, col: usize, class: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols && class < self.classes);
        ((row * self.cols + col) * self.classes + class) * self.layout().per_class()
    }

    pub fn block(&self, row: usize, col: usize, class: usize) -> &[f64] {
        let o = self.offset(row, col, class);
        &self.data[o..o + self.layout().per_class()]
    }

    pub fn block_mut(&mut self, row: usize, col: usize, class: usize) -> &mut [f64] {
        let o = self.offset(row, col, class);
        let n = self.layout().per_class();
        &mut self.data[o..o + n]
    }

    pub fn prob(&self, row: usize, col: usize, class: usize) -> f64 {
        self.data[self.offset(row, col, class)]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layout().per_class();
        for (i, block) in self.data.chunks_exact(n).enumerate() {
            if let Some(v) = block.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite output {v} in block {i}")));
            }
            let p = block[OutputLayout::P];
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidArgument(format!("probability {p} in block {i} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Logistic squashing kept strictly inside (0, 1).
pub fn logistic(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_count() {
        let l = OutputLayout::new(30);
        assert_eq!(l.per_class(), 1 + 2 + 2 * 31 + 2 * 31);
        assert_eq!(3 * l.per_class(), 381);
        assert_eq!(l.center_y(30) + 1, l.sin(0));
        assert_eq!(l.cos(30) + 1, l.per_class());
    }

    #[test]
    fn logistic_bounds() {
        assert_eq!(logistic(0.0), 0.5);
        for x in [-800.0, -40.0, 40.0, 800.0] {
            let p = logistic(x);
            assert!(p > 0.0 && p < 1.0, "{x} -> {p}");
        }
        assert!((logit(logistic(2.5)) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn from_vec_checks() {
        let n = OutputLayout::new(2).per_class();
        assert!(CellOutputs::from_vec(1, 2, 1, 2, vec![0.5; 2 * n - 1]).is_err());
        assert!(CellOutputs::from_vec(1, 1, 1, 2, vec![1.0; n]).is_err());
        assert!(CellOutputs::from_vec(1, 1, 1, 2, vec![0.5; n]).is_ok());
    }
}
