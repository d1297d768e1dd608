//! The four pipeline commands. Each reads its inputs from the output
//! directory of the previous stage and writes into its own subdirectory,
//! together with the effective config it ran with.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use wbc_core::data::{
    balance_and_expand, compute_standardization, load_csv_dataset, synthetic, write_csv_dataset,
    Dataset, Image, Provenance, StandardizationStats, CLASS_NAMES, NUM_CLASSES,
};
use wbc_core::ensemble::{
    train_members, EnsembleModel, Member, MemberConfig, MemberId, TensorSet, TrainingRun,
};
use wbc_core::explain::{explain as run_lime, render_overlay, Explanation};
use wbc_core::metrics::{
    confusion_csv, confusion_matrix, metrics_table_csv, normalize_confusion,
    normalized_confusion_csv, overall_accuracy, per_class_metrics, roc_csv, roc_curve,
    ConfusionMatrix, PerClassMetrics, RocCurve,
};
use wbc_core::tensor::argmax;

use crate::checkpoint;
use crate::config::{RunConfig, Stage};
use crate::error::{CliError, Context, Result};
use crate::fsutil::{read_text, write_atomic};
use crate::plot::{self, Series, Tile};
use crate::raster;

/// Where each stage reads and writes under the output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            root: config.output_dir.clone(),
        }
    }

    pub fn prepare(&self) -> PathBuf {
        self.root.join("prepare")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }

    pub fn evaluate(&self) -> PathBuf {
        self.root.join("evaluate")
    }

    pub fn explain(&self) -> PathBuf {
        self.root.join("explain")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.train().join("model.dcen")
    }

    pub fn test_csv(&self) -> PathBuf {
        self.prepare().join("test.csv")
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_dataset(dataset, &mut buf).context(|| path.display().to_string())?;
    write_atomic(path, &buf)
}

fn load_dataset(path: &Path, height: usize, width: usize) -> Result<Dataset> {
    load_csv_dataset(path, height, width).context(|| format!("loading {}", path.display()))
}

fn write_effective_config(dir: &Path, config: &RunConfig) -> Result<()> {
    write_text(&dir.join("effective_config.txt"), &config.to_text())
}

pub struct PrepareReport {
    pub train: Dataset,
    pub test: Dataset,
    pub augmented: Dataset,
    pub stats: StandardizationStats,
}

/// Loads or generates the dataset, splits it, computes standardization
/// statistics on the train split and expands the train split by
/// augmentation.
pub fn prepare(config: &RunConfig) -> Result<PrepareReport> {
    let (h, w) = (config.data.height, config.data.width);
    let dataset = match &config.data.path {
        Some(path) => load_dataset(path, h, w)?,
        None => synthetic::smear_dataset(
            &config.data.synthetic_counts,
            h,
            w,
            config.stage_seed(Stage::SyntheticData),
        ),
    };
    let (train, test) = config
        .split
        .preset()
        .apply(&dataset, config.stage_seed(Stage::Split))
        .context(|| "splitting".into())?;
    let stats = compute_standardization(&train).context(|| "standardization".into())?;
    let augmented =
        balance_and_expand(&train, &config.augmentation()).context(|| "augmentation".into())?;

    let dir = Layout::new(config).prepare();
    write_dataset(&dir.join("train.csv"), &train)?;
    write_dataset(&dir.join("test.csv"), &test)?;
    write_dataset(&dir.join("train_augmented.csv"), &augmented)?;
    write_text(&dir.join("stats.txt"), &stats.to_text())?;
    write_text(&dir.join("manifest.csv"), &manifest(&dataset, &train, &test, &augmented))?;
    write_effective_config(&dir, config)?;
    Ok(PrepareReport {
        train,
        test,
        augmented,
        stats,
    })
}

fn manifest(all: &Dataset, train: &Dataset, test: &Dataset, augmented: &Dataset) -> String {
    let mut s = format!("split,{},total\n", CLASS_NAMES.join(","));
    let created = augmented
        .images()
        .iter()
        .filter(|i| i.provenance == Provenance::Augmented);
    let mut created_counts = [0usize; NUM_CLASSES];
    for item in created {
        created_counts[item.label] += 1;
    }
    let rows = [
        ("all", all.class_counts()),
        ("train", train.class_counts()),
        ("test", test.class_counts()),
        ("train_augmented", augmented.class_counts()),
        ("augmented_only", created_counts),
    ];
    for (name, counts) in rows {
        let cells: Vec<String> = counts.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{name},{},{}", cells.join(","), counts.iter().sum::<usize>());
    }
    s
}

pub struct TrainReport {
    pub model: EnsembleModel,
    pub runs: Vec<TrainingRun>,
    /// Member accuracies on the un-augmented train split, which set the
    /// ensemble weights.
    pub weight_accuracies: Vec<f64>,
    pub wall_clock: Duration,
}

/// Trains the three members on the augmented train split, evaluating on the
/// test split after every epoch, and fits accuracy-proportional weights on
/// the un-augmented train split.
pub fn train(config: &RunConfig) -> Result<TrainReport> {
    let layout = Layout::new(config);
    let prep = layout.prepare();
    let (h, w) = (config.data.height, config.data.width);
    let augmented = load_dataset(&prep.join("train_augmented.csv"), h, w)?;
    let original = load_dataset(&prep.join("train.csv"), h, w)?;
    let test = load_dataset(&prep.join("test.csv"), h, w)?;
    let stats_path = prep.join("stats.txt");
    let stats = StandardizationStats::from_text(&read_text(&stats_path)?)
        .context(|| stats_path.display().to_string())?;

    let train_set = TensorSet::from_dataset(&augmented, &stats);
    let weight_set = TensorSet::from_dataset(&original, &stats);
    let eval_set = TensorSet::from_dataset(&test, &stats);
    let configs: Vec<MemberConfig> = MemberId::ALL
        .iter()
        .map(|&id| MemberConfig::new(id, h, w, config.model))
        .collect();
    let train_config = config.train_config();

    let started = Instant::now();
    let trained = train_members(&configs, &train_set, &eval_set, &train_config)
        .context(|| "training".into())?;
    let wall_clock = started.elapsed();
    let (members, runs): (Vec<Member>, Vec<TrainingRun>) = trained.into_iter().unzip();
    let mut model = EnsembleModel::new(members, stats, config.combiner, train_config.seed);
    let weight_accuracies = model
        .fit_weights(&weight_set)
        .context(|| "fitting ensemble weights".into())?;

    let dir = layout.train();
    checkpoint::save(&model, &dir.join("model.dcen"))?;
    write_text(&dir.join("epoch_log.csv"), &epoch_log(&runs))?;
    write_text(&dir.join("accuracy.svg"), &curve_svg(&runs, Curve::Accuracy))?;
    write_text(&dir.join("loss.svg"), &curve_svg(&runs, Curve::Loss))?;
    let report = TrainReport {
        model,
        runs,
        weight_accuracies,
        wall_clock,
    };
    write_text(&dir.join("summary.txt"), &train_summary(&report))?;
    write_effective_config(&dir, config)?;
    Ok(report)
}

/// One row per epoch and member, members in A, B, C order within an epoch.
pub fn epoch_log(runs: &[TrainingRun]) -> String {
    let mut s = String::from("epoch,member,train_loss,train_acc,eval_loss,eval_acc\n");
    let epochs = runs.iter().map(|r| r.epochs.len()).max().unwrap_or(0);
    for e in 0..epochs {
        for (run, id) in runs.iter().zip(MemberId::ALL) {
            if let Some(r) = run.epochs.get(e) {
                let _ = writeln!(
                    s,
                    "{},{id},{},{},{},{}",
                    r.epoch, r.train_loss, r.train_accuracy, r.eval_loss, r.eval_accuracy
                );
            }
        }
    }
    s
}

#[derive(Clone, Copy)]
enum Curve {
    Accuracy,
    Loss,
}

fn curve_svg(runs: &[TrainingRun], curve: Curve) -> String {
    let mut series = Vec::new();
    let mut y_max: f64 = 0.0;
    for (run, id) in runs.iter().zip(MemberId::ALL) {
        for eval in [false, true] {
            let points: Vec<(f64, f64)> = run
                .epochs
                .iter()
                .map(|r| {
                    let y = match (curve, eval) {
                        (Curve::Accuracy, false) => r.train_accuracy,
                        (Curve::Accuracy, true) => r.eval_accuracy,
                        (Curve::Loss, false) => r.train_loss,
                        (Curve::Loss, true) => r.eval_loss,
                    };
                    (r.epoch as f64, y)
                })
                .collect();
            y_max = points.iter().map(|p| p.1).filter(|y| y.is_finite()).fold(y_max, f64::max);
            series.push(Series {
                name: format!("{id} {}", if eval { "test" } else { "train" }),
                points,
                dashed: eval,
            });
        }
    }
    let epochs = runs.iter().map(|r| r.epochs.len()).max().unwrap_or(1).max(1) as f64;
    match curve {
        Curve::Accuracy => plot::line_chart(
            "Training and testing accuracy",
            "epoch",
            "accuracy",
            (1.0, epochs),
            (0.0, 1.0),
            &series,
        ),
        Curve::Loss => plot::line_chart(
            "Training and testing loss",
            "epoch",
            "cross-entropy",
            (1.0, epochs),
            (0.0, (y_max * 1.05).max(1e-3)),
            &series,
        ),
    }
}

fn train_summary(report: &TrainReport) -> String {
    let m = &report.model;
    let mut s = String::new();
    let _ = writeln!(s, "combiner={}", m.combiner);
    let _ = writeln!(s, "seed={}", m.seed);
    let _ = writeln!(s, "wall_clock_seconds={:.3}", report.wall_clock.as_secs_f64());
    for ((run, member), (w, acc)) in report
        .runs
        .iter()
        .zip(&m.members)
        .zip(m.weights.iter().zip(&report.weight_accuracies))
    {
        let id = member.config.id;
        let member_time: f64 = run.epochs.iter().map(|e| e.wall_clock.as_secs_f64()).sum();
        let _ = writeln!(s, "member.{id}.parameters={}", member.graph.param_count());
        let _ = writeln!(s, "member.{id}.epochs={}", run.epochs.len());
        let _ = writeln!(s, "member.{id}.optimizer={}", run.optimizer);
        if let Some(last) = run.epochs.last() {
            let _ = writeln!(s, "member.{id}.final_train_acc={}", last.train_accuracy);
            let _ = writeln!(s, "member.{id}.final_test_acc={}", last.eval_accuracy);
        }
        let _ = writeln!(s, "member.{id}.weight_fit_acc={acc}");
        let _ = writeln!(s, "member.{id}.weight={w}");
        let _ = writeln!(s, "member.{id}.wall_clock_seconds={member_time:.3}");
    }
    s
}

pub struct EvaluateReport {
    pub confusion: ConfusionMatrix,
    pub metrics: PerClassMetrics,
    pub accuracy: f64,
    /// `None` for classes missing a positive or negative population.
    pub roc: Vec<Option<RocCurve>>,
    pub predictions: Vec<usize>,
}

/// Geometry `(height, width)` the checkpoint was trained at.
fn model_geometry(model: &EnsembleModel) -> Result<(usize, usize)> {
    let first = model
        .members
        .first()
        .ok_or_else(|| CliError::Checkpoint("checkpoint has no members".into()))?;
    let [_, h, w] = first.config.input_shape;
    if model.members.iter().any(|m| m.config.input_shape != first.config.input_shape) {
        return Err(CliError::Checkpoint("members disagree on input geometry".into()));
    }
    Ok((h, w))
}

pub fn evaluate(
    config: &RunConfig,
    checkpoint_path: Option<&Path>,
    test_path: Option<&Path>,
) -> Result<EvaluateReport> {
    let layout = Layout::new(config);
    let model = checkpoint::load(checkpoint_path.unwrap_or(&layout.checkpoint()))?;
    let (h, w) = model_geometry(&model)?;
    let test_path = test_path.map_or_else(|| layout.test_csv(), Path::to_path_buf);
    let test = load_dataset(&test_path, h, w)?;
    let set = TensorSet::from_dataset(&test, &model.stats);
    let probs = model.predict_set(&set).context(|| "predicting".into())?;
    let predictions: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let confusion =
        confusion_matrix(&set.labels, &predictions, NUM_CLASSES).context(|| "confusion".into())?;
    let metrics = per_class_metrics(&confusion);
    let accuracy = overall_accuracy(&confusion).context(|| "accuracy".into())?;
    let roc: Vec<Option<RocCurve>> = (0..NUM_CLASSES)
        .map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            roc_curve(&scores, &set.labels, c).ok()
        })
        .collect();

    let dir = layout.evaluate();
    write_text(&dir.join("metrics.csv"), &metrics_table_csv(&metrics, accuracy, &CLASS_NAMES))?;
    write_text(&dir.join("confusion.csv"), &confusion_csv(&confusion, &CLASS_NAMES))?;
    write_text(
        &dir.join("confusion_normalized.csv"),
        &normalized_confusion_csv(&normalize_confusion(&confusion), &CLASS_NAMES),
    )?;
    for (c, curve) in roc.iter().enumerate() {
        if let Some(curve) = curve {
            write_text(
                &dir.join(format!("roc_{}.csv", CLASS_NAMES[c])),
                &roc_csv(curve, CLASS_NAMES[c]),
            )?;
        }
    }
    write_text(&dir.join("roc.svg"), &roc_svg(&roc))?;
    write_text(&dir.join("samples.svg"), &samples_svg(&test, &predictions))?;
    let report = EvaluateReport {
        confusion,
        metrics,
        accuracy,
        roc,
        predictions,
    };
    write_text(&dir.join("summary.txt"), &evaluate_summary(&report, &model, &test_path))?;
    write_effective_config(&dir, config)?;
    Ok(report)
}

fn roc_svg(roc: &[Option<RocCurve>]) -> String {
    let mut series: Vec<Series> = roc
        .iter()
        .enumerate()
        .filter_map(|(c, curve)| {
            curve.as_ref().map(|curve| Series {
                name: format!("{} (AUC {:.4})", CLASS_NAMES[c], curve.auc),
                points: curve.points.iter().map(|p| (p.fpr, p.tpr)).collect(),
                dashed: false,
            })
        })
        .collect();
    series.push(Series {
        name: "chance".into(),
        points: vec![(0.0, 0.0), (1.0, 1.0)],
        dashed: true,
    });
    plot::line_chart(
        "One-vs-rest ROC",
        "false positive rate",
        "true positive rate",
        (0.0, 1.0),
        (0.0, 1.0),
        &series,
    )
}

const SAMPLE_TILES: usize = 20;

/// Evenly spaced test images, captioned with actual and predicted class.
fn samples_svg(test: &Dataset, predictions: &[usize]) -> String {
    let n = test.len();
    let k = SAMPLE_TILES.min(n);
    let tiles: Vec<Tile> = (0..k)
        .map(|i| {
            let item = &test.images()[i * n / k];
            Tile {
                png: raster::encode_png(&item.image, &[]),
                actual: CLASS_NAMES[item.label].into(),
                predicted: CLASS_NAMES[predictions[i * n / k]].into(),
            }
        })
        .collect();
    plot::sample_grid("Actual vs predicted", &tiles, 5)
}

fn evaluate_summary(report: &EvaluateReport, model: &EnsembleModel, test_path: &Path) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "test_set={}", test_path.display());
    let _ = writeln!(s, "images={}", report.confusion.total());
    let _ = writeln!(s, "accuracy={}", report.accuracy);
    let _ = writeln!(s, "combiner={}", model.combiner);
    for (member, w) in model.members.iter().zip(&model.weights) {
        let _ = writeln!(s, "weight.{}={w}", member.config.id);
    }
    for (c, curve) in report.roc.iter().enumerate() {
        match curve {
            Some(curve) => {
                let _ = writeln!(s, "auc.{}={}", CLASS_NAMES[c], curve.auc);
            }
            None => {
                let _ = writeln!(s, "auc.{}=undefined", CLASS_NAMES[c]);
            }
        }
    }
    s
}

/// Image to explain.
#[derive(Clone, Debug)]
pub enum ExplainTarget {
    /// Row of a test CSV; the prepared test split when `test` is `None`.
    TestIndex { test: Option<PathBuf>, index: usize },
    Png(PathBuf),
}

pub struct ExplainReport {
    pub explanation: Explanation,
    pub top_regions: Vec<usize>,
    pub overlay_path: PathBuf,
    pub overlay_png: Vec<u8>,
}

pub fn explain(
    config: &RunConfig,
    checkpoint_path: Option<&Path>,
    target: &ExplainTarget,
) -> Result<ExplainReport> {
    let layout = Layout::new(config);
    let model = checkpoint::load(checkpoint_path.unwrap_or(&layout.checkpoint()))?;
    let (h, w) = model_geometry(&model)?;
    let (image, actual, tag, source): (Image, Option<usize>, String, String) = match target {
        ExplainTarget::TestIndex { test, index } => {
            let path = test.clone().unwrap_or_else(|| layout.test_csv());
            let ds = load_dataset(&path, h, w)?;
            let item = ds.get(*index).ok_or_else(|| {
                CliError::Override(format!(
                    "index {index} out of range for {} test images",
                    ds.len()
                ))
            })?;
            (
                item.image.clone(),
                Some(item.label),
                format!("test{index}"),
                format!("{}#{index}", path.display()),
            )
        }
        ExplainTarget::Png(path) => {
            let decoded = raster::read_png(path)?;
            let img = decoded.image;
            if (img.height(), img.width()) != (h, w) {
                return Err(CliError::Image {
                    path: path.clone(),
                    message: format!(
                        "{}×{} image, model expects {h}×{w}",
                        img.height(),
                        img.width()
                    ),
                });
            }
            let stem = path
                .file_stem()
                .map_or("image".into(), |s| s.to_string_lossy().into_owned());
            (img, None, stem, path.display().to_string())
        }
    };

    let lime = config.explain_config();
    let explanation = run_lime(&model, &image, &lime).context(|| "explaining".into())?;
    let top = explanation.top_regions(config.explain.top_regions);
    let class_name = CLASS_NAMES[explanation.target_class];
    let overlay = render_overlay(&image, &explanation.superpixels, &top, class_name)
        .context(|| "rendering overlay".into())?;
    let probability = explanation.probability.to_string();
    let png = raster::encode_png(
        &overlay.image,
        &[("class", &overlay.class_name), ("probability", &probability)],
    );

    let dir = layout.explain();
    let overlay_path = dir.join(format!("overlay_{tag}.png"));
    write_atomic(&overlay_path, &png)?;
    let mut csv = String::from("region,coefficient\n");
    for (r, c) in explanation.coefficients().iter().enumerate() {
        let _ = writeln!(csv, "{r},{c}");
    }
    write_text(&dir.join(format!("coefficients_{tag}.csv")), &csv)?;

    let mut side = String::new();
    let _ = writeln!(side, "source={source}");
    if let Some(a) = actual {
        let _ = writeln!(side, "actual_class={}", CLASS_NAMES[a]);
    }
    let _ = writeln!(side, "target_class={class_name}");
    let _ = writeln!(side, "probability={probability}");
    let _ = writeln!(side, "regions={}", explanation.superpixels.region_count());
    let _ = writeln!(side, "samples={}", explanation.samples);
    let _ = writeln!(side, "kernel_width={}", explanation.kernel_width);
    let _ = writeln!(side, "lambda={}", explanation.lambda);
    let _ = writeln!(side, "segmentation={:?}", lime.segmentation);
    let _ = writeln!(side, "seed={}", explanation.seed);
    let _ = writeln!(side, "intercept={}", explanation.surrogate.intercept);
    let _ = writeln!(side, "mean_response={}", explanation.surrogate.mean_response);
    let tops: Vec<String> = top.iter().map(usize::to_string).collect();
    let _ = writeln!(side, "top_regions={}", tops.join(","));
    write_text(&dir.join(format!("explanation_{tag}.txt")), &side)?;
    write_effective_config(&dir, config)?;
    Ok(ExplainReport {
        explanation,
        top_regions: top,
        overlay_path,
        overlay_png: png,
    })
}
