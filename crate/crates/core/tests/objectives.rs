use mvfusion::eval::{decode_detections, DecodeParams};
use mvfusion::geometry::RotatedBox2D;
use mvfusion::nn::OutputLayout;
use mvfusion::objectives::{
    encode_targets, fit_outputs, focal_loss, loss_gradients, smooth_l1, total_loss, LossParams,
};
use mvfusion::oracle::finite_difference_gradient;
use mvfusion::raster::GridSpec;
use mvfusion::scene::{ActorClass, ActorLabel, LabelSet, Waypoint};
use mvfusion::selfcheck::{constant_center_error_term, decay_sum};
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::centered(24.0, 18.0, 3.2, 0.5, 0.5, 0.2, -0.2).unwrap()
}

fn label(id: u32, class: ActorClass, cx: f64, cy: f64, l: f64, w: f64, heading: f64) -> ActorLabel {
    ActorLabel {
        id,
        class,
        bbox: RotatedBox2D::new(cx, cy, l, w, heading).unwrap(),
        height: 1.5,
        waypoints: (1..=30)
            .map(|h| Waypoint {
                cx: cx + 0.2 * h as f64 * heading.cos(),
                cy: cy + 0.2 * h as f64 * heading.sin(),
                heading,
            })
            .collect(),
    }
}

fn labels() -> LabelSet {
    LabelSet {
        timestamp: 0.0,
        horizon: 30,
        actors: vec![
            label(0, ActorClass::Vehicle, 4.1, 1.3, 4.5, 2.0, 0.3),
            label(1, ActorClass::Pedestrian, -2.2, -3.1, 0.6, 0.6, -1.2),
            label(2, ActorClass::Bicyclist, 9.7, -4.4, 1.8, 0.7, 2.5),
        ],
    }
}

#[test]
fn constant_center_error_is_a_decayed_sum() {
    let params = LossParams::default();
    let term = constant_center_error_term(0.3, &params).unwrap();
    let by_hand: f64 = (0..=30).map(|h| smooth_l1(0.3) * 0.97f64.powi(h)).sum();
    assert!((term - by_hand).abs() < 1e-12);
    assert!((term - 0.916535).abs() < 1e-6);
    assert!((decay_sum(0.97, 30) - 20.367438).abs() < 1e-6);
}

#[test]
fn lambda_zero_keeps_only_first_waypoint() {
    let params = LossParams {
        lambda: 0.0,
        ..LossParams::default()
    };
    let term = constant_center_error_term(0.3, &params).unwrap();
    assert!((term - 0.045).abs() < 1e-12);
}

#[test]
fn perfect_regression_has_zero_regression_gradient() {
    let targets = encode_targets(&labels(), &grid(), 4, 30).unwrap();
    let outputs = targets.ideal_outputs(3.0, -3.0);
    let g = loss_gradients(&outputs, &targets, &LossParams::default()).unwrap();
    let per = outputs.layout().per_class();
    for block in g.chunks_exact(per) {
        assert!(block[1..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gradients_match_finite_differences_near_targets() {
    let params = LossParams::default();
    let targets = encode_targets(&labels(), &grid(), 4, 30).unwrap();
    let mut outputs = targets.ideal_outputs(0.5, -0.5);
    let layout = OutputLayout::new(30);
    for (i, v) in outputs.data.iter_mut().enumerate() {
        if i % layout.per_class() != OutputLayout::P {
            *v += 0.05 + 0.01 * ((i % 13) as f64);
        }
    }
    let a = loss_gradients(&outputs, &targets, &params).unwrap();
    let n = finite_difference_gradient(&outputs, &targets, &params, 1e-4).unwrap();
    for (x, y) in a.iter().zip(&n) {
        let scale = x.abs().max(y.abs());
        assert!(scale < 1e-12 || (x - y).abs() / scale < 1e-4, "{x} vs {y}");
    }
}

#[test]
fn fit_then_decode_recovers_boxes() {
    let params = LossParams::default();
    let g = grid();
    let targets = encode_targets(&labels(), &g, 4, 30).unwrap();
    let fit = fit_outputs(&targets, &params, 400, 1.0).unwrap();
    assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    let dets = decode_detections(&fit.outputs, &g.lattice(4), &DecodeParams::default());
    for l in &labels().actors {
        let d = dets
            .iter()
            .filter(|d| d.class == l.class)
            .max_by(|a, b| a.score.total_cmp(&b.score))
            .unwrap();
        assert!((d.bbox.cx - l.bbox.cx).hypot(d.bbox.cy - l.bbox.cy) < 1.0);
    }
    let before = total_loss(&targets.ideal_outputs(0.0, 0.0), &targets, &params).unwrap().total;
    assert!(*fit.history.last().unwrap() < before);
}

proptest! {
    #[test]
    fn focal_nonnegative_and_decreasing(p in 1e-6f64..1.0 - 1e-6, q in 1e-6f64..1.0 - 1e-6) {
        let (a, b) = (focal_loss(p, 2.0), focal_loss(q, 2.0));
        prop_assert!(a >= 0.0 && b >= 0.0);
        if p < q {
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn smooth_l1_even_and_continuous(d in -10.0f64..10.0) {
        prop_assert_eq!(smooth_l1(d), smooth_l1(-d));
        prop_assert!((smooth_l1(1.0 + 1e-12) - smooth_l1(1.0 - 1e-12)).abs() < 1e-9);
        prop_assert!(smooth_l1(d) <= d.abs().max(0.5 * d * d));
    }

    #[test]
    fn every_actor_gets_a_cell(cx in -7.9f64..15.9, cy in -8.9f64..8.9, l in 0.2f64..5.0, w in 0.2f64..2.5, h in -3.1f64..3.1) {
        let set = LabelSet { timestamp: 0.0, horizon: 30, actors: vec![label(0, ActorClass::Vehicle, cx, cy, l, w, h)] };
        let t = encode_targets(&set, &grid(), 4, 30).unwrap();
        prop_assert!(t.fg_count() >= 1);
        for (r, c) in t.fg_cells(0) {
            let target = t.get(r, c, 0).unwrap();
            let center = t.lattice.cell_center(r, c);
            prop_assert!((center.x + target.offsets[0].0 - cx).abs() < 1e-9);
            prop_assert!((center.y + target.offsets[0].1 - cy).abs() < 1e-9);
        }
    }
}
