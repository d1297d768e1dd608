//! Confusion matrices, per-class metric tables, ROC curves and AUC.
//!
//! Zero denominators never produce NaN: the metric is reported as 0 and the
//! class is flagged as degenerate.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `K×K` counts; cell `(i, j)` counts samples of true class `i` predicted as
/// class `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

/// One-vs-rest counts for a single class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} true labels, {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![0u64; classes * classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            for label in [t, p] {
                if label >= classes {
                    return Err(Error::LabelOutOfRange { label, classes });
                }
            }
            counts[t * classes + p] += 1;
        }
        Ok(Self { classes, counts })
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::ShapeMismatch(format!(
                "{} counts for a {classes}×{classes} matrix",
                counts.len()
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.row(class).iter().sum()
    }

    pub fn predicted_count(&self, class: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, class)).sum()
    }

    pub fn class_counts(&self, class: usize) -> ClassCounts {
        let tp = self.get(class, class);
        let fp = self.predicted_count(class) - tp;
        let fn_ = self.support(class) - tp;
        ClassCounts {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_labels(truth, predicted, classes)
}

/// Row-normalized confusion matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedConfusion {
    pub values: Vec<Vec<f64>>,
    /// Rows with no samples; they are left all-zero.
    pub zero_support: Vec<bool>,
}

pub fn normalize_confusion(cm: &ConfusionMatrix) -> NormalizedConfusion {
    let mut values = Vec::with_capacity(cm.classes());
    let mut zero_support = Vec::with_capacity(cm.classes());
    for i in 0..cm.classes() {
        let support = cm.support(i);
        zero_support.push(support == 0);
        values.push(
            cm.row(i)
                .iter()
                .map(|&c| if support == 0 { 0.0 } else { c as f64 / support as f64 })
                .collect(),
        );
    }
    NormalizedConfusion {
        values,
        zero_support,
    }
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub support: u64,
    /// Set when any of the ratios had a zero denominator.
    pub degenerate: bool,
}

impl ClassMetrics {
    pub fn from_counts(c: ClassCounts) -> Self {
        let mut degenerate = false;
        let precision = ratio(c.tp, c.tp + c.fp, &mut degenerate);
        let recall = ratio(c.tp, c.tp + c.fn_, &mut degenerate);
        let specificity = ratio(c.tn, c.tn + c.fp, &mut degenerate);
        // TP / (TP + (FP + FN)/2), kept in integers as 2TP / (2TP + FP + FN)
        let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, &mut degenerate);
        Self {
            precision,
            recall,
            f1,
            specificity,
            support: c.tp + c.fn_,
            degenerate,
        }
    }
}

/// Column statistic over classes (the AV and STD rows).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub support: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerClassMetrics {
    pub rows: Vec<ClassMetrics>,
    pub mean: MetricSummary,
    /// Population standard deviation over classes.
    pub std: MetricSummary,
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> PerClassMetrics {
    let rows: Vec<ClassMetrics> = (0..cm.classes())
        .map(|c| ClassMetrics::from_counts(cm.class_counts(c)))
        .collect();
    let column = |f: fn(&ClassMetrics) -> f64| -> (f64, f64) {
        let n = rows.len() as f64;
        let mean = rows.iter().map(f).sum::<f64>() / n;
        let var = rows.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let p = column(|r| r.precision);
    let r = column(|r| r.recall);
    let f = column(|r| r.f1);
    let s = column(|r| r.specificity);
    let n = column(|r| r.support as f64);
    PerClassMetrics {
        mean: MetricSummary {
            precision: p.0,
            recall: r.0,
            f1: f.0,
            specificity: s.0,
            support: n.0,
        },
        std: MetricSummary {
            precision: p.1,
            recall: r.1,
            f1: f.1,
            specificity: s.1,
            support: n.1,
        },
        rows,
    }
}

/// Fraction of samples on the diagonal.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedAverages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Support-weighted means of precision, recall and F1.
pub fn weighted_average_metrics(rows: &[ClassMetrics], supports: &[u64]) -> Result<WeightedAverages> {
    if rows.len() != supports.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} metric rows, {} supports",
            rows.len(),
            supports.len()
        )));
    }
    let total: u64 = supports.iter().sum();
    if total == 0 {
        return Err(Error::InvalidParameter("total support is zero".into()));
    }
    let avg = |f: fn(&ClassMetrics) -> f64| {
        rows.iter()
            .zip(supports)
            .map(|(r, &s)| f(r) * s as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(WeightedAverages {
        precision: avg(|r| r.precision),
        recall: avg(|r| r.recall),
        f1: avg(|r| r.f1),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalancedRate {
    pub value: f64,
    pub degenerate: bool,
}

/// `0.5 · (TPR + TNR)` for one class, with `TNR = TN / (TN + FP)`.
pub fn balanced_rate(cm: &ConfusionMatrix, class: usize) -> BalancedRate {
    let c = cm.class_counts(class);
    let mut degenerate = false;
    let tpr = ratio(c.tp, c.tp + c.fn_, &mut degenerate);
    let tnr = ratio(c.tn, c.tn + c.fp, &mut degenerate);
    BalancedRate {
        value: 0.5 * (tpr + tnr),
        degenerate,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive; the first point uses +∞.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub class: usize,
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// One-vs-rest ROC for `class`, sweeping a threshold over every distinct
/// score. AUC is the trapezoidal area.
pub fn roc_curve(scores: &[f64], labels: &[usize], class: usize) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidParameter(format!("score {s} outside [0, 1]")));
    }
    let positives = labels.iter().filter(|&&l| l == class).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassPopulation(class));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == class {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve {
        class,
        points,
        auc,
    })
}

/// Metric table in the published layout: one row per class, then AV, STD and
/// Accuracy footer rows.
pub fn metrics_table_csv(metrics: &PerClassMetrics, accuracy: f64, class_names: &[&str]) -> String {
    let mut s = String::from("Class Label,Precision,Recall,F1 Score,Specificity,Support\n");
    for (i, r) in metrics.rows.iter().enumerate() {
        let name = class_names.get(i).copied().unwrap_or("?");
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{}",
            r.precision, r.recall, r.f1, r.specificity, r.support
        );
    }
    let m = &metrics.mean;
    let _ = writeln!(
        s,
        "AV,{},{},{},{},{}",
        m.precision, m.recall, m.f1, m.specificity, m.support
    );
    let d = &metrics.std;
    let _ = writeln!(s, "STD,{},{},{},{},", d.precision, d.recall, d.f1, d.specificity);
    let _ = writeln!(s, "Accuracy,{accuracy},,,,");
    s
}

pub fn confusion_csv(cm: &ConfusionMatrix, class_names: &[&str]) -> String {
    let mut s = String::from("actual\\predicted");
    for c in 0..cm.classes() {
        let _ = write!(s, ",{}", class_names.get(c).copied().unwrap_or("?"));
    }
    s.push('\n');
    for i in 0..cm.classes() {
        s.push_str(class_names.get(i).copied().unwrap_or("?"));
        for &v in cm.row(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn normalized_confusion_csv(norm: &NormalizedConfusion, class_names: &[&str]) -> String {
    let mut s = String::from("actual\\predicted");
    for c in 0..norm.values.len() {
        let _ = write!(s, ",{}", class_names.get(c).copied().unwrap_or("?"));
    }
    s.push('\n');
    for (i, row) in norm.values.iter().enumerate() {
        s.push_str(class_names.get(i).copied().unwrap_or("?"));
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// ROC points as `class,threshold,fpr,tpr` rows.
pub fn roc_csv(curve: &RocCurve, class_name: &str) -> String {
    let mut s = String::from("class,threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(s, "{class_name},{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}
