use crate::error::{Error, Result};
use crate::geometry::{box_intersection_area, RotatedBox2D};

/// Boxes with less area than this have IoU 0 with everything.
const MIN_AREA: f64 = 1e-12;

pub fn rotated_iou(a: &RotatedBox2D, b: &RotatedBox2D) -> f64 {
    let (aa, ab) = (a.area(), b.area());
    if aa < MIN_AREA || ab < MIN_AREA {
        return 0.0;
    }
    let inter = box_intersection_area(a, b).clamp(0.0, aa.min(ab));
    (inter / (aa + ab - inter)).clamp(0.0, 1.0)
}

/// One ranked detection after matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEntry {
    pub score: f64,
    /// Index into the detection slice given to [`match_detections`].
    pub det: usize,
    /// Matched ground truth index; `None` marks a false positive.
    pub gt: Option<usize>,
}

impl MatchEntry {
    pub fn is_tp(&self) -> bool {
        self.gt.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// Detections in processing order (descending score).
    pub entries: Vec<MatchEntry>,
    pub num_gt: usize,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.entries.iter().filter(|e| e.is_tp()).count()
    }

    pub fn unmatched_gt(&self) -> usize {
        self.num_gt - self.tp()
    }
}

/// Greedy matching in descending score order (ties keep input order). Each
/// detection takes its highest-IoU unmatched ground truth, and is a true
/// positive when that IoU reaches `iou_thresh`.
pub fn match_detections(dets: &[(f64, RotatedBox2D)], gts: &[RotatedBox2D], iou_thresh: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].0.total_cmp(&dets[a].0));
    let mut taken = vec![false; gts.len()];
    let mut entries = Vec::with_capacity(dets.len());
    for i in order {
        let (score, bbox) = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let iou = rotated_iou(bbox, g);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        let gt = match best {
            Some((j, iou)) if iou >= iou_thresh && iou > 0.0 => {
                taken[j] = true;
                Some(j)
            }
            _ => None,
        };
        entries.push(MatchEntry { score: *score, det: i, gt });
    }
    MatchResult {
        entries,
        num_gt: gts.len(),
    }
}

/// Pooled entries ranked by descending score, with the total ground truth count.
fn pooled(results: &[MatchResult]) -> (Vec<MatchEntry>, usize) {
    let mut all: Vec<MatchEntry> = results.iter().flat_map(|r| r.entries.iter().copied()).collect();
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    (all, results.iter().map(|r| r.num_gt).sum())
}

/// (recall, precision) after each detection group of equal score.
pub fn pr_curve(results: &[MatchResult]) -> Vec<(f64, f64)> {
    let (all, num_gt) = pooled(results);
    let mut curve = Vec::new();
    if num_gt == 0 {
        return curve;
    }
    let (mut tp, mut n) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].score;
        while i < all.len() && all[i].score == s {
            tp += all[i].is_tp() as usize;
            n += 1;
            i += 1;
        }
        curve.push((tp as f64 / num_gt as f64, tp as f64 / n as f64));
    }
    curve
}

/// All-point area under the monotone precision envelope. Zero when there
/// are no ground truths.
pub fn average_precision(results: &[MatchResult]) -> f64 {
    let curve = pr_curve(results);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(r, _)) in curve.iter().enumerate() {
        let envelope = curve[i..].iter().map(|&(_, p)| p).fold(0.0, f64::max);
        ap += (r - prev_recall) * envelope;
        prev_recall = r;
    }
    ap
}

pub fn max_recall(results: &[MatchResult]) -> f64 {
    pr_curve(results).last().map_or(0.0, |&(r, _)| r)
}

/// Highest score threshold whose recall (over detections scoring at or
/// above it) reaches `target`.
pub fn operating_threshold_for_recall(results: &[MatchResult], target: f64) -> Result<f64> {
    let (all, num_gt) = pooled(results);
    if num_gt > 0 {
        let mut tp = 0usize;
        let mut i = 0;
        while i < all.len() {
            let s = all[i].score;
            while i < all.len() && all[i].score == s {
                tp += all[i].is_tp() as usize;
                i += 1;
            }
            // small slack so that e.g. 4/5 counts as reaching 0.8
            if tp as f64 / num_gt as f64 >= target - 1e-12 {
                return Ok(s);
            }
        }
    }
    Err(Error::RecallUnattainable {
        target,
        achievable: max_recall(results),
    })
}

/// Mean Euclidean distance between predicted and true centers, in centimeters.
pub fn displacement_error(pairs: &[((f64, f64), (f64, f64))]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let sum: f64 = pairs.iter().map(|((px, py), (gx, gy))| (px - gx).hypot(py - gy)).sum();
    Some(100.0 * sum / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(cx: f64) -> RotatedBox2D {
        RotatedBox2D::new(cx, 0.0, 1.0, 1.0, 0.0).unwrap()
    }

    fn entries(flags: &[bool], num_gt: usize) -> MatchResult {
        MatchResult {
            entries: flags
                .iter()
                .enumerate()
                .map(|(i, &tp)| MatchEntry {
                    score: 0.9 - 0.1 * i as f64,
                    det: i,
                    gt: tp.then_some(i),
                })
                .collect(),
            num_gt,
        }
    }

    #[test]
    fn iou_basics() {
        assert!((rotated_iou(&unit(0.0), &unit(0.0)) - 1.0).abs() < 1e-12);
        assert_eq!(rotated_iou(&unit(0.0), &unit(3.0)), 0.0);
        assert!((rotated_iou(&unit(0.0), &unit(0.5)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicates_one_tp() {
        let d = [(0.9, unit(0.0)), (0.8, unit(0.0))];
        let m = match_detections(&d, &[unit(0.0)], 0.5);
        assert_eq!(m.tp(), 1);
        assert_eq!(m.entries[1].gt, None);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[entries(&[true, true], 2)]), 1.0);
        assert_eq!(average_precision(&[entries(&[], 2)]), 0.0);
        let ap = average_precision(&[entries(&[true, false, true], 2)]);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let m = entries(&[true; 5], 5);
        assert!((operating_threshold_for_recall(&[m], 0.8).unwrap() - 0.6).abs() < 1e-12);
        let m = entries(&[true], 1);
        assert_eq!(operating_threshold_for_recall(&[m], 1.0).unwrap(), 0.9);
        let m = entries(&[true, false], 2);
        assert!(matches!(
            operating_threshold_for_recall(&[m], 0.8),
            Err(Error::RecallUnattainable { .. })
        ));
    }

    #[test]
    fn de_examples() {
        assert_eq!(displacement_error(&[((1.0, 2.0), (1.0, 2.0))]), Some(0.0));
        let mixed = [((0.5, 0.0), (0.0, 0.0)), ((0.0, 1.5), (0.0, 0.0))];
        assert!((displacement_error(&mixed).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(displacement_error(&[]), None);
    }
}
