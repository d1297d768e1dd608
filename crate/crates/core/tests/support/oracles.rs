//! Independent reference computations used by the metric and LIME checks.

#![allow(dead_code)]

/// One-vs-rest precision, recall, F1 and specificity counted directly from
/// the label pairs.
pub fn brute_force(truth: &[usize], pred: &[usize], class: usize) -> (f64, f64, f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == class, p == class) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1, div(tn, tn + fp))
}

/// Probability that a random positive outscores a random negative, ties 0.5.
pub fn mann_whitney(scores: &[f64], labels: &[usize], class: usize) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != class {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == class {
                continue;
            }
            pairs += 1.0;
            num += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    num / pairs
}

pub fn exhaustive_masks(s: usize) -> Vec<Vec<bool>> {
    (0..1u32 << s)
        .map(|bits| (0..s).map(|j| bits >> j & 1 == 1).collect())
        .collect()
}

/// `c + Σ βⱼ zⱼ` for each mask.
pub fn linear(masks: &[Vec<bool>], beta: &[f64], c: f64) -> Vec<f64> {
    masks
        .iter()
        .map(|m| c + m.iter().zip(beta).filter(|(b, _)| **b).map(|(_, w)| w).sum::<f64>())
        .collect()
}
