//! First-stage detection and motion-forecasting loss.
//!
//! Per class and output cell, background cells pay `focal(1 − p̂)`; foreground
//! cells pay `Σ_h λ^h L_fg(h)` where `L_fg(h)` holds the classification and
//! size terms at h = 0 only, and center plus sin/cos heading terms at every h.
//! All reductions are sums in row-major cell order.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::nn::{logistic, logit, CellOutputs, OutputLayout};
use crate::raster::{BevLattice, GridSpec};
use crate::scene::LabelSet;

/// Probability clamp keeping every log finite.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub lambda: f64,
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            lambda: 0.97,
            gamma: 2.0,
            horizon: 30,
        }
    }
}

/// Regression targets of one foreground (cell, class).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTarget {
    pub actor_id: u32,
    pub length: f64,
    pub width: f64,
    /// Center minus cell center, meters, h = 0..=H.
    pub offsets: Vec<(f64, f64)>,
    /// (sin θ_h, cos θ_h), h = 0..=H.
    pub headings: Vec<(f64, f64)>,
}

/// Foreground assignment and targets on the output lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTargets {
    pub lattice: BevLattice,
    pub classes: usize,
    pub horizon: usize,
    /// `[row][col][class]`; `None` is background.
    pub cells: Vec<Option<RegressionTarget>>,
}

impl CellTargets {
    pub fn rows(&self) -> usize {
        self.lattice.rows
    }

    pub fn cols(&self) -> usize {
        self.lattice.cols
    }

    pub fn get(&self, row: usize, col: usize, class: usize) -> Option<&RegressionTarget> {
        self.cells[(row * self.cols() + col) * self.classes + class].as_ref()
    }

    pub fn fg_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn fg_cells(&self, class: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                if self.get(r, c, class).is_some() {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Outputs equal to the targets, with the given logits on fg and bg cells.
    pub fn ideal_outputs(&self, fg_logit: f64, bg_logit: f64) -> CellOutputs {
        let mut out = CellOutputs::neutral(self.rows(), self.cols(), self.classes, self.horizon);
        let layout = out.layout();
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                for k in 0..self.classes {
                    let block = out.block_mut(r, c, k);
                    match self.get(r, c, k) {
                        None => block[OutputLayout::P] = logistic(bg_logit),
                        Some(t) => {
                            block[OutputLayout::P] = logistic(fg_logit);
                            write_target(block, &layout, t);
                        }
                    }
                }
            }
        }
        out
    }
}

fn write_target(block: &mut [f64], layout: &OutputLayout, t: &RegressionTarget) {
    block[OutputLayout::LENGTH] = t.length;
    block[OutputLayout::WIDTH] = t.width;
    for h in 0..=layout.horizon {
        block[layout.center_x(h)] = t.offsets[h].0;
        block[layout.center_y(h)] = t.offsets[h].1;
        block[layout.sin(h)] = t.headings[h].0;
        block[layout.cos(h)] = t.headings[h].1;
    }
}

/// A cell is foreground for an actor's class when its center lies inside the
/// actor's h = 0 box. An actor too small to contain any cell center claims
/// the cell holding its box center instead, so it still gets a target. When
/// boxes share a cell, the actor whose center is closest wins.
pub fn encode_targets(labels: &LabelSet, grid: &GridSpec, output_stride: usize, horizon: usize) -> Result<CellTargets> {
    if output_stride == 0 {
        return Err(Error::InvalidArgument("output stride must be positive".into()));
    }
    if labels.horizon < horizon {
        return Err(Error::InvalidArgument(format!(
            "labels carry {} waypoints, {horizon} requested",
            labels.horizon
        )));
    }
    let classes = crate::scene::ActorClass::ALL.len();
    let lattice = grid.lattice(output_stride);
    let mut cells: Vec<Option<RegressionTarget>> = vec![None; lattice.rows * lattice.cols * classes];
    let mut best = vec![f64::INFINITY; cells.len()];
    for actor in &labels.actors {
        let b = actor.bbox;
        let r = b.radius();
        let row_lo = ((b.cx - r - lattice.x_min) / lattice.cell_l).floor().max(0.0) as usize;
        let row_hi = (((b.cx + r - lattice.x_min) / lattice.cell_l).ceil().max(0.0) as usize).min(lattice.rows);
        let col_lo = ((b.cy - r - lattice.y_min) / lattice.cell_w).floor().max(0.0) as usize;
        let col_hi = (((b.cy + r - lattice.y_min) / lattice.cell_w).ceil().max(0.0) as usize).min(lattice.cols);
        let mut claimed = Vec::new();
        for row in row_lo..row_hi {
            for col in col_lo..col_hi {
                if b.contains(lattice.cell_center(row, col)) {
                    claimed.push((row, col));
                }
            }
        }
        if claimed.is_empty() {
            if let Some(cell) = lattice.cell_of(Point2::new(b.cx, b.cy)) {
                claimed.push(cell);
            }
        }
        let k = actor.class.index();
        for (row, col) in claimed {
            let center = lattice.cell_center(row, col);
            let slot = (row * lattice.cols + col) * classes + k;
            let d = (b.cx - center.x).hypot(b.cy - center.y);
            if d >= best[slot] {
                continue;
            }
            best[slot] = d;
            let mut offsets = Vec::with_capacity(horizon + 1);
            let mut headings = Vec::with_capacity(horizon + 1);
            for h in 0..=horizon {
                let w = actor.waypoint(h);
                offsets.push((w.cx - center.x, w.cy - center.y));
                headings.push(w.heading.sin_cos());
            }
            cells[slot] = Some(RegressionTarget {
                actor_id: actor.id,
                length: b.length,
                width: b.width,
                offsets,
                headings,
            });
        }
    }
    Ok(CellTargets {
        lattice,
        classes,
        horizon,
        cells,
    })
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `−(1 − p)^γ ln p` with p clamped to [ε, 1 − ε].
pub fn focal_loss(p: f64, gamma: f64) -> f64 {
    let p = clamp_prob(p);
    -(1.0 - p).powf(gamma) * p.ln()
}

/// d focal / dp; zero where the clamp is active.
pub fn focal_grad(p: f64, gamma: f64) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    let q = 1.0 - p;
    let first = if gamma == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) * p.ln() };
    first - q.powf(gamma) / p
}

/// Huber-style loss with the transition at |d| = 1.
pub fn smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

pub fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

/// Unweighted foreground loss of one class block at horizon `h`.
pub fn fg_loss_at_h(block: &[f64], target: &RegressionTarget, h: usize, params: &LossParams) -> f64 {
    let t = fg_terms_at_h(block, target, h, params);
    t.focal + t.size + t.center + t.heading
}

#[derive(Debug, Clone, Copy, Default)]
struct FgTerms {
    focal: f64,
    size: f64,
    center: f64,
    heading: f64,
}

fn fg_terms_at_h(block: &[f64], target: &RegressionTarget, h: usize, params: &LossParams) -> FgTerms {
    let layout = OutputLayout::new(params.horizon);
    let mut t = FgTerms::default();
    if h == 0 {
        t.focal = focal_loss(block[OutputLayout::P], params.gamma);
        t.size = smooth_l1(block[OutputLayout::LENGTH] - target.length)
            + smooth_l1(block[OutputLayout::WIDTH] - target.width);
    }
    let (ox, oy) = target.offsets[h];
    let (s, c) = target.headings[h];
    t.center = smooth_l1(block[layout.center_x(h)] - ox) + smooth_l1(block[layout.center_y(h)] - oy);
    t.heading = smooth_l1(block[layout.sin(h)] - s) + smooth_l1(block[layout.cos(h)] - c);
    t
}

/// Loss terms of one class. Center and heading entries are λ^h weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLoss {
    pub focal_fg: f64,
    pub focal_bg: f64,
    pub size: f64,
    pub center: Vec<f64>,
    pub heading: Vec<f64>,
}

impl ClassLoss {
    fn new(horizon: usize) -> Self {
        Self {
            focal_fg: 0.0,
            focal_bg: 0.0,
            size: 0.0,
            center: vec![0.0; horizon + 1],
            heading: vec![0.0; horizon + 1],
        }
    }

    pub fn regression(&self) -> f64 {
        self.size + self.center.iter().sum::<f64>() + self.heading.iter().sum::<f64>()
    }

    pub fn sum(&self) -> f64 {
        self.focal_fg + self.focal_bg + self.regression()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub fg_cells: usize,
    pub classes: Vec<ClassLoss>,
}

impl LossBreakdown {
    pub fn terms_sum(&self) -> f64 {
        self.classes.iter().map(ClassLoss::sum).sum()
    }

    pub fn fg_total(&self) -> f64 {
        self.classes.iter().map(|c| c.focal_fg + c.regression()).sum()
    }

    /// Flat `key = value` report.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "total = {}", self.total);
        let _ = writeln!(s, "fg_cells = {}", self.fg_cells);
        for (k, c) in self.classes.iter().enumerate() {
            let name = crate::scene::ActorClass::from_index(k).map_or_else(|| format!("class{k}"), |c| c.name().into());
            let _ = writeln!(s, "{name}.focal_fg = {}", c.focal_fg);
            let _ = writeln!(s, "{name}.focal_bg = {}", c.focal_bg);
            let _ = writeln!(s, "{name}.size = {}", c.size);
            for (h, (ce, he)) in c.center.iter().zip(&c.heading).enumerate() {
                let _ = writeln!(s, "{name}.center.h{h} = {ce}");
                let _ = writeln!(s, "{name}.heading.h{h} = {he}");
            }
        }
        s
    }
}

fn check_aligned(outputs: &CellOutputs, targets: &CellTargets, params: &LossParams) -> Result<()> {
    if (outputs.rows, outputs.cols, outputs.classes) != (targets.rows(), targets.cols(), targets.classes) {
        return Err(Error::ShapeMismatch(format!(
            "outputs {}x{}x{} vs targets {}x{}x{}",
            outputs.rows,
            outputs.cols,
            outputs.classes,
            targets.rows(),
            targets.cols(),
            targets.classes
        )));
    }
    if outputs.horizon != params.horizon || targets.horizon < params.horizon {
        return Err(Error::ShapeMismatch(format!(
            "horizon {} requested, outputs carry {}, targets {}",
            params.horizon, outputs.horizon, targets.horizon
        )));
    }
    Ok(())
}

/// Loss of one class block; adds its terms into `acc`.
fn block_loss(block: &[f64], target: Option<&RegressionTarget>, params: &LossParams, acc: &mut ClassLoss) -> f64 {
    match target {
        None => {
            let l = focal_loss(1.0 - block[OutputLayout::P], params.gamma);
            acc.focal_bg += l;
            l
        }
        Some(t) => {
            let mut sum = 0.0;
            let mut w = 1.0;
            for h in 0..=params.horizon {
                let terms = fg_terms_at_h(block, t, h, params);
                acc.focal_fg += terms.focal;
                acc.size += terms.size;
                acc.center[h] += w * terms.center;
                acc.heading[h] += w * terms.heading;
                sum += w * (terms.focal + terms.size + terms.center + terms.heading);
                w *= params.lambda;
            }
            sum
        }
    }
}

/// Loss of a single (cell, class) block.
pub fn cell_loss(block: &[f64], target: Option<&RegressionTarget>, params: &LossParams) -> f64 {
    block_loss(block, target, params, &mut ClassLoss::new(params.horizon))
}

pub fn total_loss(outputs: &CellOutputs, targets: &CellTargets, params: &LossParams) -> Result<LossBreakdown> {
    check_aligned(outputs, targets, params)?;
    let mut classes: Vec<ClassLoss> = (0..outputs.classes).map(|_| ClassLoss::new(params.horizon)).collect();
    let mut total = 0.0;
    for r in 0..outputs.rows {
        for c in 0..outputs.cols {
            for (k, acc) in classes.iter_mut().enumerate() {
                total += block_loss(outputs.block(r, c, k), targets.get(r, c, k), params, acc);
            }
        }
    }
    Ok(LossBreakdown {
        total,
        fg_cells: targets.fg_count(),
        classes,
    })
}

/// Gradient of one block's loss with respect to its channels (p̂ itself, not its logit).
pub fn cell_gradient(block: &[f64], target: Option<&RegressionTarget>, params: &LossParams, grad: &mut [f64]) {
    grad.fill(0.0);
    let layout = OutputLayout::new(params.horizon);
    match target {
        None => grad[OutputLayout::P] = -focal_grad(1.0 - block[OutputLayout::P], params.gamma),
        Some(t) => {
            grad[OutputLayout::P] = focal_grad(block[OutputLayout::P], params.gamma);
            grad[OutputLayout::LENGTH] = smooth_l1_grad(block[OutputLayout::LENGTH] - t.length);
            grad[OutputLayout::WIDTH] = smooth_l1_grad(block[OutputLayout::WIDTH] - t.width);
            let mut w = 1.0;
            for h in 0..=params.horizon {
                let (ox, oy) = t.offsets[h];
                let (s, c) = t.headings[h];
                grad[layout.center_x(h)] = w * smooth_l1_grad(block[layout.center_x(h)] - ox);
                grad[layout.center_y(h)] = w * smooth_l1_grad(block[layout.center_y(h)] - oy);
                grad[layout.sin(h)] = w * smooth_l1_grad(block[layout.sin(h)] - s);
                grad[layout.cos(h)] = w * smooth_l1_grad(block[layout.cos(h)] - c);
                w *= params.lambda;
            }
        }
    }
}

/// ∂loss/∂output for every channel, laid out like `outputs.data`.
pub fn loss_gradients(outputs: &CellOutputs, targets: &CellTargets, params: &LossParams) -> Result<Vec<f64>> {
    check_aligned(outputs, targets, params)?;
    let per = outputs.layout().per_class();
    let mut grad = vec![0.0; outputs.data.len()];
    for r in 0..outputs.rows {
        for c in 0..outputs.cols {
            for k in 0..outputs.classes {
                let o = outputs.offset(r, c, k);
                cell_gradient(outputs.block(r, c, k), targets.get(r, c, k), params, &mut grad[o..o + per]);
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub outputs: CellOutputs,
    /// Loss before the first step and after every accepted step.
    pub history: Vec<f64>,
}

/// Gradient descent on the outputs themselves, with p̂ held as a logit.
/// Each step starts at `learning_rate` and halves until the loss does not
/// increase; the run stops early when no halving helps.
pub fn fit_outputs_from(
    init: &CellOutputs,
    targets: &CellTargets,
    params: &LossParams,
    steps: usize,
    learning_rate: f64,
) -> Result<FitResult> {
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate {learning_rate} must be positive")));
    }
    let per = init.layout().per_class();
    let to_raw = |o: &CellOutputs| -> Vec<f64> {
        let mut raw = o.data.clone();
        for b in raw.chunks_exact_mut(per) {
            b[OutputLayout::P] = logit(b[OutputLayout::P]);
        }
        raw
    };
    let from_raw = |raw: &[f64]| -> CellOutputs {
        let mut o = init.clone();
        o.data.copy_from_slice(raw);
        for b in o.data.chunks_exact_mut(per) {
            b[OutputLayout::P] = logistic(b[OutputLayout::P]);
        }
        o
    };
    let mut raw = to_raw(init);
    let mut current = from_raw(&raw);
    let mut loss = total_loss(&current, targets, params)?.total;
    let mut history = vec![loss];
    for _ in 0..steps {
        let mut grad = loss_gradients(&current, targets, params)?;
        for (g, b) in grad.chunks_exact_mut(per).zip(current.data.chunks_exact(per)) {
            let p = b[OutputLayout::P];
            g[OutputLayout::P] *= p * (1.0 - p);
        }
        let mut lr = learning_rate;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = raw.iter().zip(&grad).map(|(x, g)| x - lr * g).collect();
            let cand = from_raw(&trial);
            let l = total_loss(&cand, targets, params)?.total;
            if l <= loss {
                raw = trial;
                current = cand;
                loss = l;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(loss);
    }
    Ok(FitResult {
        outputs: current,
        history,
    })
}

/// [`fit_outputs_from`] starting at neutral outputs (p̂ = 0.5, regression 0).
pub fn fit_outputs(targets: &CellTargets, params: &LossParams, steps: usize, learning_rate: f64) -> Result<FitResult> {
    let init = CellOutputs::neutral(targets.rows(), targets.cols(), targets.classes, params.horizon);
    fit_outputs_from(&init, targets, params, steps, learning_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RotatedBox2D;
    use crate::scene::{ActorClass, ActorLabel, Waypoint};

    fn label(class: ActorClass, cx: f64, cy: f64, l: f64, w: f64, heading: f64, horizon: usize) -> ActorLabel {
        ActorLabel {
            id: 1,
            class,
            bbox: RotatedBox2D::new(cx, cy, l, w, heading).unwrap(),
            height: 1.6,
            waypoints: (1..=horizon)
                .map(|h| Waypoint {
                    cx: cx + 0.5 * h as f64,
                    cy,
                    heading,
                })
                .collect(),
        }
    }

    fn grid() -> GridSpec {
        GridSpec::centered(40.0, 30.0, 3.0, 0.16, 0.16, 0.2, -0.2).unwrap()
    }

    #[test]
    fn focal_values() {
        assert!((focal_loss(0.5, 2.0) - 0.25 * 2f64.ln()).abs() < 1e-12);
        assert!((focal_loss(0.3, 0.0) + 0.3f64.ln()).abs() < 1e-12);
        assert!(focal_loss(1.0, 2.0) < 1e-12);
        assert!(focal_loss(0.0, 2.0).is_finite());
    }

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1_grad(0.5), 0.5);
        assert_eq!(smooth_l1_grad(2.0), 1.0);
        assert_eq!(smooth_l1_grad(-2.0), -1.0);
    }

    #[test]
    fn empty_labels_all_background() {
        let t = encode_targets(&LabelSet::empty(0.0, 30), &grid(), 4, 30).unwrap();
        assert_eq!(t.fg_count(), 0);
    }

    #[test]
    fn vehicle_fg_count() {
        let mut labels = LabelSet::empty(0.0, 3);
        labels.actors.push(label(ActorClass::Vehicle, 3.1, 1.7, 4.8, 1.92, 0.0, 3));
        let t = encode_targets(&labels, &grid(), 4, 3).unwrap();
        let n = t.fg_cells(0).len();
        assert!((18..=27).contains(&n), "{n}");
        assert!(t.fg_cells(1).is_empty());
    }

    #[test]
    fn centered_actor_zero_offset() {
        let g = grid();
        let lat = g.lattice(4);
        let c = lat.cell_center(20, 11);
        let mut labels = LabelSet::empty(0.0, 2);
        labels.actors.push(label(ActorClass::Vehicle, c.x, c.y, 4.0, 1.8, 0.3, 2));
        let t = encode_targets(&labels, &g, 4, 2).unwrap();
        let target = t.get(20, 11, 0).unwrap();
        assert!(target.offsets[0].0.abs() < 1e-12 && target.offsets[0].1.abs() < 1e-12);
    }

    #[test]
    fn tiny_actor_claims_its_center_cell() {
        let g = GridSpec::centered(40.0, 30.0, 3.0, 0.5, 0.5, 0.2, -0.2).unwrap();
        let lat = g.lattice(4);
        let c = lat.cell_center(5, 5);
        let mut labels = LabelSet::empty(0.0, 1);
        // 0.4 m wide, positioned between cell centers
        labels.actors.push(label(ActorClass::Pedestrian, c.x + 0.6, c.y + 0.6, 0.5, 0.4, 0.0, 1));
        let t = encode_targets(&labels, &g, 4, 1).unwrap();
        assert_eq!(t.fg_cells(1), vec![(5, 5)]);
    }

    #[test]
    fn single_term_examples() {
        let params = LossParams {
            horizon: 30,
            ..Default::default()
        };
        let target = RegressionTarget {
            actor_id: 0,
            length: 4.0,
            width: 2.0,
            offsets: vec![(0.1, -0.2); 31],
            headings: vec![(0.0, 1.0); 31],
        };
        let layout = OutputLayout::new(30);
        let mut block = vec![0.0; layout.per_class()];
        write_target(&mut block, &layout, &target);
        block[0] = 1.0;
        assert!(fg_loss_at_h(&block, &target, 5, &params).abs() < 1e-12);
        block[layout.center_x(0)] += 0.3;
        assert!((fg_loss_at_h(&block, &target, 0, &params) - 0.045).abs() < 1e-9);
        block[layout.center_x(0)] -= 0.3;
        block[layout.sin(7)] = 0.0;
        block[layout.cos(7)] = -1.0;
        assert!((fg_loss_at_h(&block, &target, 7, &params) - 1.5).abs() < 1e-12);
    }
}
