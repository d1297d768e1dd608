#[path = "support/oracles.rs"]
mod oracles;

use oracles::{brute_force, mann_whitney};
use proptest::prelude::*;
use rand::Rng;
use wbc_core::metrics::{
    balanced_rate, confusion_matrix, normalize_confusion, overall_accuracy, per_class_metrics,
    roc_curve, ConfusionMatrix,
};
use wbc_core::rng;

const K: usize = 5;

#[test]
fn random_fixtures_match_counting_oracle() {
    for fixture in 0..200u64 {
        let mut r = rng::substream(42, &[fixture]);
        let n = r.random_range(1..=500);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..K)).collect();
        let pred: Vec<usize> = (0..n)
            .map(|i| if r.random_bool(0.6) { truth[i] } else { r.random_range(0..K) })
            .collect();
        let cm = confusion_matrix(&truth, &pred, K).unwrap();
        let m = per_class_metrics(&cm);
        for c in 0..K {
            let (p, rc, f1, s) = brute_force(&truth, &pred, c);
            let row = m.rows[c];
            assert!((row.precision - p).abs() <= 1e-12, "fixture {fixture} class {c}");
            assert!((row.recall - rc).abs() <= 1e-12);
            assert!((row.f1 - f1).abs() <= 1e-12);
            assert!((row.specificity - s).abs() <= 1e-12);
        }
        let correct = truth.iter().zip(&pred).filter(|(a, b)| a == b).count();
        assert!((overall_accuracy(&cm).unwrap() - correct as f64 / n as f64).abs() <= 1e-12);
    }
}

#[test]
fn basophil_row_of_published_table() {
    // TP 88, FN 1, FP 0 for class 0; the remaining 3,761 test images are
    // correct predictions of other classes
    let mut truth = vec![0; 89];
    let mut pred = vec![0; 88];
    pred.push(1);
    truth.extend(std::iter::repeat_n(2, 3761));
    pred.extend(std::iter::repeat_n(2, 3761));
    let cm = confusion_matrix(&truth, &pred, K).unwrap();
    let row = per_class_metrics(&cm).rows[0];
    assert_eq!(row.precision, 1.0);
    assert!((row.recall - 0.9888).abs() < 5e-5);
    assert!((row.f1 - 0.9944).abs() < 5e-5);
}

#[test]
fn trapezoid_auc_equals_concordance() {
    let worked = roc_curve(&[0.9, 0.4, 0.6, 0.2], &[1, 1, 0, 0], 1).unwrap();
    assert!((worked.auc - 0.75).abs() <= 1e-12);
    assert!((mann_whitney(&[0.9, 0.4, 0.6, 0.2], &[1, 1, 0, 0], 1) - 0.75).abs() <= 1e-12);

    for fixture in 0..100u64 {
        let mut r = rng::substream(7, &[fixture]);
        let n = r.random_range(2..=50);
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // coarse scores so ties occur
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..=10u8)) / 10.0).collect();
        let auc = roc_curve(&scores, &labels, 1).unwrap().auc;
        assert!((auc - mann_whitney(&scores, &labels, 1)).abs() <= 1e-12, "fixture {fixture}");
    }
}

fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..200).prop_flat_map(|n| {
        (
            proptest::collection::vec(0..K, n),
            proptest::collection::vec(0..K, n),
        )
    })
}

proptest! {
    #[test]
    fn confusion_sums((truth, pred) in labels_strategy()) {
        let cm = confusion_matrix(&truth, &pred, K).unwrap();
        prop_assert_eq!(cm.total() as usize, truth.len());
        for c in 0..K {
            let counts = cm.class_counts(c);
            prop_assert_eq!((counts.tp + counts.fp + counts.fn_ + counts.tn) as usize, truth.len());
            prop_assert_eq!(cm.support(c) as usize, truth.iter().filter(|&&t| t == c).count());
        }
        let norm = normalize_confusion(&cm);
        for (row, &empty) in norm.values.iter().zip(&norm.zero_support) {
            let s: f64 = row.iter().sum();
            let expected = if empty { 0.0 } else { 1.0 };
            prop_assert!((s - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_bounded_and_f1_is_harmonic_mean((truth, pred) in labels_strategy()) {
        let cm = confusion_matrix(&truth, &pred, K).unwrap();
        let m = per_class_metrics(&cm);
        for row in &m.rows {
            for v in [row.precision, row.recall, row.f1, row.specificity] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if row.precision + row.recall > 0.0 {
                let h = 2.0 * row.precision * row.recall / (row.precision + row.recall);
                prop_assert!((row.f1 - h).abs() < 1e-12);
            }
        }
        prop_assert!(m.std.f1 >= 0.0);
        for c in 0..K {
            let b = balanced_rate(&cm, c);
            prop_assert!((0.0..=1.0).contains(&b.value));
        }
    }

    #[test]
    fn roc_is_monotone_from_origin_to_corner(
        scores in proptest::collection::vec(0.0f64..=1.0, 2..60),
        seed in any::<u64>(),
    ) {
        let mut r = rng::stream(seed);
        let mut labels: Vec<usize> = scores.iter().map(|_| r.random_range(0..3)).collect();
        labels[0] = 2;
        labels[1] = 0;
        let curve = roc_curve(&scores, &labels, 2).unwrap();
        let first = curve.points[0];
        let last = *curve.points.last().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
        prop_assert!((curve.auc - mann_whitney(&scores, &labels, 2)).abs() < 1e-12);
    }
}

#[test]
fn matrix_from_counts_matches_labels() {
    let truth = [0, 1, 1, 2, 2, 2];
    let pred = [0, 1, 2, 2, 2, 0];
    let a = confusion_matrix(&truth, &pred, 3).unwrap();
    let b = ConfusionMatrix::from_counts(3, vec![1, 0, 0, 0, 1, 1, 1, 0, 2]).unwrap();
    assert_eq!(a, b);
}
