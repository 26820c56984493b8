mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use pseudobox::geometry::IouKind;
use pseudobox::metrics::{ap_recall_positions, closed_gap, quality_report, EvalConfig, ScoredBox};

proptest! {
    #[test]
    fn ap_matches_pr_curve_oracle(seed in any::<u64>(), bev in any::<bool>(), thr in prop::sample::select(vec![0.5, 0.7])) {
        let (preds, gts) = common::ap_instance(seed, 5, 10);
        let cfg = EvalConfig {
            iou_threshold: thr,
            iou_kind: if bev { IouKind::Bev } else { IouKind::ThreeD },
            ..EvalConfig::default()
        };
        match ap_recall_positions(&preds, &gts, &cfg) {
            Ok(ap) => prop_assert!((ap - common::oracle_ap(&preds, &gts, &cfg)).abs() < 1e-9),
            Err(_) => prop_assert!(gts.iter().all(Vec::is_empty)),
        }
    }

    #[test]
    fn counts_add_up(seed in any::<u64>()) {
        let (preds, gts) = common::ap_instance(seed, 5, 10);
        let q = quality_report(preds.iter().map(Vec::as_slice).zip(gts.iter().map(Vec::as_slice)), &EvalConfig::default());
        let n_pred: usize = preds.iter().map(Vec::len).sum();
        let n_gt: usize = gts.iter().map(Vec::len).sum();
        prop_assert_eq!(q.tp_count + q.fp_count, n_pred);
        prop_assert_eq!(q.tp_count + q.fn_count, n_gt);
        prop_assert!((0.0..=1.0).contains(&q.f1));
    }
}

#[test]
fn perfect_predictions_score_one() {
    let (_, gts) = common::ap_instance(5, 3, 8);
    let preds: Vec<Vec<ScoredBox<f64>>> = gts
        .iter()
        .map(|g| {
            g.iter()
                .map(|&b| ScoredBox {
                    bbox: b,
                    score: 0.9,
                })
                .collect()
        })
        .collect();
    let cfg = EvalConfig::default();
    if gts.iter().any(|g| !g.is_empty()) {
        assert_eq!(ap_recall_positions(&preds, &gts, &cfg).unwrap(), 1.0);
        let q = quality_report(
            preds
                .iter()
                .map(Vec::as_slice)
                .zip(gts.iter().map(Vec::as_slice)),
            &cfg,
        );
        assert_eq!((q.precision, q.recall, q.f1), (1.0, 1.0, 1.0));
        assert_eq!((q.ate, q.ase, q.aoe), (0.0, 0.0, 0.0));
    }
}

#[test]
fn closed_gap_values() {
    assert_abs_diff_eq!(
        closed_gap(61.83, 27.48, 73.45).unwrap(),
        74.72,
        epsilon = 0.01
    );
    assert_abs_diff_eq!(
        closed_gap(73.37, 27.48, 73.45).unwrap(),
        99.83,
        epsilon = 0.01
    );
    assert!(closed_gap(50.0, 40.0, 40.0).is_err());
}
