use std::cmp::Ordering;

use crate::geometry::{normalize_angle, RotatedBox2D};
use crate::nn::{CellOutputs, OutputLayout};
use crate::raster::BevLattice;
use crate::scene::{ActorClass, Waypoint};

use super::metrics::rotated_iou;

/// Decoded boxes never shrink below this size, so every box stays valid.
const MIN_EXTENT: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct DetBox {
    pub class: ActorClass,
    pub score: f64,
    pub bbox: RotatedBox2D,
    /// Absolute ego-frame waypoints for h = 1..=H.
    pub trajectory: Vec<Waypoint>,
    /// Output cell the detection was decoded from.
    pub cell: (usize, usize),
}

impl DetBox {
    pub fn waypoint(&self, h: usize) -> Waypoint {
        if h == 0 {
            Waypoint {
                cx: self.bbox.cx,
                cy: self.bbox.cy,
                heading: self.bbox.heading,
            }
        } else {
            self.trajectory[h - 1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub score_floor: f64,
    pub nms_iou: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            score_floor: 0.1,
            nms_iou: 0.3,
        }
    }
}

/// Descending score, ties broken by ascending (row, col).
pub(crate) fn rank(a: &DetBox, b: &DetBox) -> Ordering {
    b.score.total_cmp(&a.score).then(a.cell.cmp(&b.cell))
}

/// One candidate per (cell, class) whose probability reaches the floor,
/// then greedy per-class rotated NMS.
pub fn decode_detections(outputs: &CellOutputs, lattice: &BevLattice, params: &DecodeParams) -> Vec<DetBox> {
    let layout = outputs.layout();
    let rows = outputs.rows.min(lattice.rows);
    let cols = outputs.cols.min(lattice.cols);
    let mut out = Vec::new();
    for k in 0..outputs.classes {
        let Some(class) = ActorClass::from_index(k) else { continue };
        let mut cands = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let b = outputs.block(r, c, k);
                let p = b[OutputLayout::P];
                if p < params.score_floor {
                    continue;
                }
                cands.push(decode_block(b, &layout, lattice, class, (r, c)));
            }
        }
        out.extend(nms(cands, params.nms_iou));
    }
    out
}

fn decode_block(b: &[f64], layout: &OutputLayout, lattice: &BevLattice, class: ActorClass, cell: (usize, usize)) -> DetBox {
    let center = lattice.cell_center(cell.0, cell.1);
    let wp = |h: usize| Waypoint {
        cx: center.x + b[layout.center_x(h)],
        cy: center.y + b[layout.center_y(h)],
        heading: normalize_angle(b[layout.sin(h)].atan2(b[layout.cos(h)])),
    };
    let w0 = wp(0);
    DetBox {
        class,
        score: b[OutputLayout::P],
        bbox: RotatedBox2D {
            cx: w0.cx,
            cy: w0.cy,
            length: b[OutputLayout::LENGTH].max(MIN_EXTENT),
            width: b[OutputLayout::WIDTH].max(MIN_EXTENT),
            heading: w0.heading,
        },
        trajectory: (1..=layout.horizon).map(wp).collect(),
        cell,
    }
}

/// Greedy suppression: a box survives unless a higher-ranked survivor
/// overlaps it with IoU above `iou`.
pub fn nms(mut dets: Vec<DetBox>, iou: f64) -> Vec<DetBox> {
    dets.sort_by(rank);
    let mut kept: Vec<DetBox> = Vec::new();
    for d in dets {
        if kept.iter().all(|k| rotated_iou(&k.bbox, &d.bbox) <= iou) {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice() -> BevLattice {
        BevLattice {
            x_min: 0.0,
            y_min: 0.0,
            cell_l: 1.0,
            cell_w: 1.0,
            rows: 4,
            cols: 4,
        }
    }

    fn outputs() -> CellOutputs {
        let mut o = CellOutputs::neutral(4, 4, 3, 2);
        for v in o.data.chunks_exact_mut(OutputLayout::new(2).per_class()) {
            v[0] = 0.01;
        }
        o
    }

    fn set(o: &mut CellOutputs, r: usize, c: usize, p: f64, dx: f64, heading: f64) {
        let l = o.layout();
        let b = o.block_mut(r, c, 0);
        b[0] = p;
        b[1] = 4.0;
        b[2] = 2.0;
        for h in 0..=2 {
            b[l.center_x(h)] = dx + h as f64;
            b[l.sin(h)] = heading.sin();
            b[l.cos(h)] = heading.cos();
        }
    }

    #[test]
    fn single_cell() {
        let mut o = outputs();
        set(&mut o, 1, 2, 0.9, 0.25, 0.4);
        let d = decode_detections(&o, &lattice(), &DecodeParams::default());
        assert_eq!(d.len(), 1);
        let b = &d[0];
        assert_eq!((b.class, b.score, b.cell), (ActorClass::Vehicle, 0.9, (1, 2)));
        assert!((b.bbox.cx - 1.75).abs() < 1e-12 && (b.bbox.cy - 2.5).abs() < 1e-12);
        assert!((b.bbox.heading - 0.4).abs() < 1e-12);
        assert!((b.trajectory[1].cx - 3.75).abs() < 1e-12);
    }

    #[test]
    fn duplicates_suppressed() {
        let mut o = outputs();
        // both cells decode to the same box
        set(&mut o, 1, 1, 0.8, 0.0, 0.0);
        set(&mut o, 2, 1, 0.9, -1.0, 0.0);
        let d = decode_detections(&o, &lattice(), &DecodeParams::default());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].score, 0.9);
    }

    #[test]
    fn tie_break_by_cell() {
        let mut o = outputs();
        set(&mut o, 2, 1, 0.7, -1.0, 0.0);
        set(&mut o, 1, 1, 0.7, 0.0, 0.0);
        let d = decode_detections(&o, &lattice(), &DecodeParams::default());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].cell, (1, 1));
    }
}
