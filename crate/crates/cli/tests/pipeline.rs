use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use wbc_cli::checkpoint;
use wbc_cli::commands::{self, ExplainTarget, Layout, TrainReport};
use wbc_cli::raster;
use wbc_cli::{Preset, RunConfig};
use wbc_core::data::{load_csv_dataset, CLASS_NAMES, PAPER_AUGMENTED_TOTAL};
use wbc_core::ensemble::{evaluate_member, TensorSet};
use wbc_core::metrics::{confusion_matrix, metrics_table_csv, overall_accuracy, per_class_metrics};
use wbc_core::tensor::argmax;

const EPOCHS: usize = 3;

struct Trained {
    _dir: tempfile::TempDir,
    config: RunConfig,
    report: TrainReport,
}

fn desk(out: &Path) -> RunConfig {
    let mut c = RunConfig::preset(Preset::Desk);
    c.output_dir = out.to_path_buf();
    c.train.epochs = EPOCHS;
    c.explain.samples = 200;
    c
}

/// One prepared and trained desk run shared by the tests below.
fn trained() -> &'static Trained {
    static RUN: OnceLock<Trained> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = desk(dir.path());
        commands::prepare(&config).unwrap();
        let report = commands::train(&config).unwrap();
        Trained {
            _dir: dir,
            config,
            report,
        }
    })
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn training_writes_checkpoint_log_and_curves() {
    let t = trained();
    let dir = Layout::new(&t.config).train();
    for f in ["model.dcen", "accuracy.svg", "loss.svg", "summary.txt", "effective_config.txt"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let log = read(dir.join("epoch_log.csv"));
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("epoch,member,train_loss,train_acc,eval_loss,eval_acc"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), EPOCHS * 3);
    assert!(rows[0].starts_with("1,A,") && rows[1].starts_with("1,B,") && rows[2].starts_with("1,C,"));
    let effective = read(dir.join("effective_config.txt"));
    assert_eq!(RunConfig::parse(&effective, Path::new("e"), None).unwrap(), t.config);
}

#[test]
fn reloaded_checkpoint_scores_like_the_trained_model() {
    let t = trained();
    let loaded = checkpoint::load(&Layout::new(&t.config).checkpoint()).unwrap();
    let test = load_csv_dataset(Layout::new(&t.config).test_csv(), 16, 16).unwrap();
    let set = TensorSet::from_dataset(&test, &loaded.stats);
    for (a, b) in t.report.model.members.iter().zip(&loaded.members) {
        assert_eq!(
            evaluate_member(&a.graph, &set).unwrap(),
            evaluate_member(&b.graph, &set).unwrap()
        );
    }
    assert_eq!(t.report.model.predict_set(&set).unwrap(), loaded.predict_set(&set).unwrap());
    assert_eq!(loaded.weights, t.report.model.weights);
}

#[test]
fn evaluation_files_match_in_memory_metrics() {
    let t = trained();
    let report = commands::evaluate(&t.config, None, None).unwrap();
    let dir = Layout::new(&t.config).evaluate();

    let model = &t.report.model;
    let test = load_csv_dataset(Layout::new(&t.config).test_csv(), 16, 16).unwrap();
    let set = TensorSet::from_dataset(&test, &model.stats);
    let preds: Vec<usize> = model.predict_set(&set).unwrap().iter().map(|p| argmax(p)).collect();
    assert_eq!(preds, report.predictions);
    let cm = confusion_matrix(&set.labels, &preds, 5).unwrap();
    let expected = metrics_table_csv(&per_class_metrics(&cm), overall_accuracy(&cm).unwrap(), &CLASS_NAMES);
    let written = read(dir.join("metrics.csv"));
    assert_eq!(written, expected);
    assert_eq!(
        written.lines().next(),
        Some("Class Label,Precision,Recall,F1 Score,Specificity,Support")
    );
    for name in CLASS_NAMES {
        assert!(dir.join(format!("roc_{name}.csv")).is_file());
    }
    let samples = read(dir.join("samples.svg"));
    assert_eq!(samples.matches("Act: ").count(), 20);
    assert_eq!(
        samples.matches(r#"fill="red""#).count(),
        2 * (0..20).filter(|i| {
            let k = i * test.len() / 20;
            preds[k] != set.labels[k]
        }).count()
    );
}

#[test]
fn explanation_artifacts_are_complete_and_repeatable() {
    let t = trained();
    let target = ExplainTarget::TestIndex { test: None, index: 5 };
    let a = commands::explain(&t.config, None, &target).unwrap();
    let b = commands::explain(&t.config, None, &target).unwrap();
    assert_eq!(a.overlay_png, b.overlay_png);
    assert_eq!(std::fs::read(&a.overlay_path).unwrap(), a.overlay_png);

    let dir = Layout::new(&t.config).explain();
    let csv = read(dir.join("coefficients_test5.csv"));
    assert_eq!(csv.lines().count(), 1 + 16);
    let decoded = raster::read_png(&a.overlay_path).unwrap();
    assert_eq!((decoded.image.height(), decoded.image.width()), (16, 16));
    let class = CLASS_NAMES[a.explanation.target_class];
    assert!(decoded.text.contains(&("class".to_owned(), class.to_owned())));
    let sidecar = read(dir.join("explanation_test5.txt"));
    assert!(sidecar.contains(&format!("target_class={class}")));
    assert!(sidecar.contains(&format!("seed={}", t.config.explain_config().seed)));
}

#[test]
fn png_input_is_explained_and_geometry_checked() {
    let t = trained();
    let test = load_csv_dataset(Layout::new(&t.config).test_csv(), 16, 16).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cell.png");
    std::fs::write(&path, raster::encode_png(&test.images()[0].image, &[])).unwrap();
    let by_png = commands::explain(&t.config, None, &ExplainTarget::Png(path.clone())).unwrap();
    let by_index =
        commands::explain(&t.config, None, &ExplainTarget::TestIndex { test: None, index: 0 }).unwrap();
    assert_eq!(by_png.explanation, by_index.explanation);

    let wrong = dir.path().join("wide.png");
    let img = wbc_core::data::Image::filled(16, 20, [0.5; 3]);
    std::fs::write(&wrong, raster::encode_png(&img, &[])).unwrap();
    assert!(matches!(
        commands::explain(&t.config, None, &ExplainTarget::Png(wrong)),
        Err(wbc_cli::CliError::Image { .. })
    ));
}

#[test]
fn zeroed_head_checkpoint_explains_to_zero() {
    let t = trained();
    let mut model = t.report.model.clone();
    for m in &mut model.members {
        let mut params = m.graph.params_mut();
        let n = params.len();
        for p in params.iter_mut().skip(n - 2) {
            p.values_mut().fill(0.0);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("flat.dcen");
    checkpoint::save(&model, &ckpt).unwrap();
    let mut config = t.config.clone();
    config.output_dir = dir.path().to_path_buf();
    let r = commands::explain(
        &config,
        Some(&ckpt),
        &ExplainTarget::TestIndex {
            test: Some(Layout::new(&t.config).test_csv()),
            index: 2,
        },
    )
    .unwrap();
    assert!(r.explanation.coefficients().iter().all(|c| c.abs() < 1e-6));
}

#[test]
fn paper_presets_reach_published_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::preset(Preset::Paper);
    config.output_dir = dir.path().to_path_buf();
    config.data.height = 2;
    config.data.width = 2;
    commands::prepare(&config).unwrap();
    let manifest = read(dir.path().join("prepare/manifest.csv"));
    let row = |name: &str| -> String {
        manifest
            .lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap()
            .to_owned()
    };
    assert_eq!(row("train"), "train,212,744,2427,561,6231,10175");
    assert_eq!(row("test"), "test,89,322,1034,234,2660,4339");
    assert!(row("train_augmented").ends_with(&format!(",{PAPER_AUGMENTED_TOTAL}")));
}

#[test]
fn prepare_is_repeatable() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        commands::prepare(&desk(dir.path())).unwrap();
        let files: Vec<Vec<u8>> = ["train.csv", "test.csv", "train_augmented.csv", "stats.txt", "manifest.csv"]
            .iter()
            .map(|f| std::fs::read(dir.path().join("prepare").join(f)).unwrap())
            .collect();
        files
    };
    assert_eq!(run(), run());
}

fn wbc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wbc")).args(args).output().unwrap()
}

#[test]
fn binary_reports_errors_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing: PathBuf = dir.path().join("missing.conf");
    let out = wbc(&["prepare", "--config", missing.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: kind=io detail="), "{err}");

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "train.epochs = 2\ntrain.epoch = 3\n").unwrap();
    let out = wbc(&["train", "--config", bad.to_str().unwrap()]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: kind=config detail="), "{err}");
    assert!(err.contains(":2:"), "{err}");

    let out = wbc(&["evaluate", "--out", dir.path().to_str().unwrap()]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(!out.status.success() && err.starts_with("error: kind=io"), "{err}");
}

#[test]
fn binary_prints_effective_config_with_overrides() {
    let out = wbc(&["config", "--preset", "desk", "--seed", "9", "--optimizer", "rmsprop", "--epochs", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let c = RunConfig::parse(&text, Path::new("stdout"), None).unwrap();
    assert_eq!((c.preset, c.seed, c.train.epochs), (Preset::Desk, 9, 4));
    assert_eq!(c.train.optimizer, wbc_core::optim::OptimizerConfig::rmsprop());
}
