use mvfusion::eval::{
    average_precision, match_detections, max_recall, nms, operating_threshold_for_recall, pr_curve, rotated_iou,
    time_pipeline, DetBox, MatchResult,
};
use mvfusion::geometry::{Pose2, RotatedBox2D};
use mvfusion::scene::ActorClass;
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = RotatedBox2D> {
    (-3.0f64..3.0, -3.0f64..3.0, 0.2f64..5.0, 0.2f64..3.0, -3.2f64..3.2)
        .prop_map(|(x, y, l, w, h)| RotatedBox2D::new(x, y, l, w, h).unwrap())
}

fn det(bbox: RotatedBox2D, score: f64, cell: usize) -> DetBox {
    DetBox {
        class: ActorClass::Vehicle,
        score,
        bbox,
        trajectory: Vec::new(),
        cell: (cell, 0),
    }
}

proptest! {
    #[test]
    fn iou_bounded_symmetric_rigid(a in boxes(), b in boxes(), tx in -20.0f64..20.0, ty in -20.0f64..20.0, yaw in -3.2f64..3.2) {
        let iou = rotated_iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&iou));
        prop_assert!((iou - rotated_iou(&b, &a)).abs() < 1e-9);
        let p = Pose2::new(tx, ty, yaw);
        prop_assert!((iou - rotated_iou(&a.transformed(&p), &b.transformed(&p))).abs() < 1e-9);
        prop_assert!((rotated_iou(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nms_survivors_do_not_overlap(bs in prop::collection::vec(boxes(), 0..25), seed in 0u64..1000) {
        let dets: Vec<DetBox> = bs.iter().enumerate().map(|(i, b)| det(*b, ((i as u64 * 7919 + seed) % 101) as f64 / 100.0, i)).collect();
        let kept = nms(dets.clone(), 0.3);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(rotated_iou(&a.bbox, &b.bbox) <= 0.3);
            }
        }
        prop_assert!(kept.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert_eq!(nms(kept.clone(), 0.3), kept.clone());
        if !dets.is_empty() {
            let best = dets.iter().map(|d| d.score).fold(f64::MIN, f64::max);
            prop_assert_eq!(kept[0].score, best);
        }
    }

    #[test]
    fn ap_and_threshold_consistent(gts in prop::collection::vec(boxes(), 1..8), dets in prop::collection::vec((boxes(), 0.0f64..1.0), 0..12), target in 0.1f64..1.0) {
        let m = match_detections(&dets.iter().map(|(b, s)| (*s, *b)).collect::<Vec<_>>(), &gts, 0.5);
        prop_assert!(m.tp() <= gts.len().min(dets.len()));
        let ap = average_precision(std::slice::from_ref(&m));
        prop_assert!((0.0..=1.0).contains(&ap));
        prop_assert!(ap <= max_recall(std::slice::from_ref(&m)) + 1e-12);
        let curve = pr_curve(std::slice::from_ref(&m));
        prop_assert!(curve.windows(2).all(|w| w[1].0 >= w[0].0));
        match operating_threshold_for_recall(std::slice::from_ref(&m), target) {
            Ok(t) => {
                let tp = m.entries.iter().filter(|e| e.score >= t && e.is_tp()).count();
                prop_assert!(tp as f64 / gts.len() as f64 >= target - 1e-12);
            }
            Err(_) => prop_assert!(max_recall(std::slice::from_ref(&m)) < target),
        }
    }

    #[test]
    fn pooling_frames_is_order_free(a in prop::collection::vec(any::<bool>(), 0..10), b in prop::collection::vec(any::<bool>(), 0..10)) {
        let mk = |flags: &[bool], offset: f64| MatchResult {
            entries: flags.iter().enumerate().map(|(i, &tp)| mvfusion::eval::MatchEntry {
                score: offset + i as f64 * 1e-3,
                det: i,
                gt: tp.then_some(i),
            }).collect(),
            num_gt: flags.len().max(1),
        };
        let (x, y) = (mk(&a, 0.1), mk(&b, 0.5));
        prop_assert_eq!(
            average_precision(&[x.clone(), y.clone()]),
            average_precision(&[y, x])
        );
    }
}

#[test]
fn latency_total_is_median_of_sums() {
    let r = time_pipeline(3, |t| {
        t.stage("a", || std::hint::black_box(1 + 1));
        Ok(())
    })
    .unwrap();
    assert_eq!(r.stages.len(), 1);
    assert!(r.total_median_ms >= 0.0 && r.to_report().contains("a.median_ms = "));
}
