//! Run configuration and its flat `key = value` file format.
//!
//! Keys carry dotted section prefixes (`train.epochs`, `explain.samples`).
//! Blank lines and lines starting with `#` are ignored. A file is applied on
//! top of its preset, so it only needs the keys it changes.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use wbc_core::data::{
    AugmentationConfig, ExpansionTargets, SplitPreset, NUM_CLASSES, RAABIN_CLASS_COUNTS,
};
use wbc_core::ensemble::{CombinerMode, TrainConfig, TrunkWidths};
use wbc_core::explain::{ExplainConfig, Segmentation};
use wbc_core::optim::{OptimizerConfig, OptimizerKind};
use wbc_core::rng;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 64×64 images, published split and augmentation, full-width members.
    Paper,
    /// Small synthetic run that finishes in seconds.
    Desk,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(format!("unknown preset {other:?} (expected paper or desk)")),
        }
    }
}

/// Pipeline stages that draw random numbers. Each gets its own seed derived
/// from the global one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    SyntheticData = 0,
    Split = 1,
    Augment = 2,
    Train = 3,
    Explain = 4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSettings {
    /// CSV export to load; `None` generates synthetic smears.
    pub path: Option<PathBuf>,
    pub height: usize,
    pub width: usize,
    pub synthetic_counts: [usize; NUM_CLASSES],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Paper,
    Fraction,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSettings {
    pub kind: SplitKind,
    /// Used by the fraction split only.
    pub train_fraction: f64,
}

impl SplitSettings {
    pub fn preset(&self) -> SplitPreset {
        match self.kind {
            SplitKind::Paper => SplitPreset::Paper,
            SplitKind::Fraction => SplitPreset::Fraction(self.train_fraction),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSettings {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentationKind {
    Grid,
    Slic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplainSettings {
    pub samples: usize,
    pub kernel_width: f64,
    pub lambda: f64,
    pub segmentation: SegmentationKind,
    pub grid_size: usize,
    pub slic_target: usize,
    pub slic_compactness: f64,
    pub slic_iterations: usize,
    /// Regions highlighted in the overlay.
    pub top_regions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub data: DataSettings,
    pub split: SplitSettings,
    /// `seed` is ignored here; the augment stage seed is used instead.
    pub augment: AugmentationConfig,
    pub model: TrunkWidths,
    pub combiner: CombinerMode,
    pub train: TrainSettings,
    pub explain: ExplainSettings,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let explain = ExplainSettings {
            samples: 1000,
            kernel_width: 0.25,
            lambda: 1.0,
            segmentation: SegmentationKind::Grid,
            grid_size: 4,
            slic_target: 16,
            slic_compactness: 0.3,
            slic_iterations: 10,
            top_regions: 3,
        };
        match preset {
            Preset::Paper => Self {
                preset,
                seed: 0,
                data: DataSettings {
                    path: None,
                    height: 64,
                    width: 64,
                    synthetic_counts: RAABIN_CLASS_COUNTS,
                },
                split: SplitSettings {
                    kind: SplitKind::Paper,
                    train_fraction: 0.7,
                },
                augment: AugmentationConfig::default(),
                model: TrunkWidths::default(),
                combiner: CombinerMode::Weighted,
                train: TrainSettings {
                    optimizer: OptimizerConfig::adam(),
                    epochs: 50,
                    batch_size: 64,
                },
                explain,
                output_dir: PathBuf::from("runs/paper"),
            },
            Preset::Desk => Self {
                preset,
                seed: 0,
                data: DataSettings {
                    path: None,
                    height: 16,
                    width: 16,
                    synthetic_counts: [30, 45, 80, 40, 120],
                },
                split: SplitSettings {
                    kind: SplitKind::Fraction,
                    train_fraction: 0.8,
                },
                augment: AugmentationConfig {
                    targets: ExpansionTargets::BalanceToMax,
                    ..AugmentationConfig::default()
                },
                model: TrunkWidths {
                    conv: [8, 16, 32],
                    dense: 64,
                },
                combiner: CombinerMode::Weighted,
                train: TrainSettings {
                    optimizer: OptimizerConfig::adam(),
                    epochs: 10,
                    batch_size: 32,
                },
                explain,
                output_dir: PathBuf::from("runs/desk"),
            },
        }
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        rng::derive_seed(self.seed, &[stage as u64])
    }

    pub fn augmentation(&self) -> AugmentationConfig {
        AugmentationConfig {
            seed: self.stage_seed(Stage::Augment),
            ..self.augment.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.train.optimizer,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.stage_seed(Stage::Train),
            stop_at_eval_accuracy: None,
        }
    }

    pub fn explain_config(&self) -> ExplainConfig {
        let e = &self.explain;
        ExplainConfig {
            samples: e.samples,
            kernel_width: e.kernel_width,
            lambda: e.lambda,
            segmentation: match e.segmentation {
                SegmentationKind::Grid => Segmentation::Grid { size: e.grid_size },
                SegmentationKind::Slic => Segmentation::SlicLite {
                    target: e.slic_target,
                    compactness: e.slic_compactness,
                    iterations: e.slic_iterations,
                },
            },
            target_class: None,
            seed: self.stage_seed(Stage::Explain),
        }
    }

    /// Reads a config file, resolving the preset from `preset` (command line)
    /// first, then the file's `preset` key, then `paper`.
    pub fn load(path: Option<&Path>, preset: Option<Preset>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::preset(preset.unwrap_or(Preset::Paper)));
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path, preset)
    }

    pub fn parse(text: &str, path: &Path, preset: Option<Preset>) -> Result<Self> {
        let err = |line: usize, message: String| CliError::Config {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            if let Some((first, _, _)) = entries.iter().find(|(_, k, _)| *k == key) {
                return Err(err(i + 1, format!("duplicate key {key} (first set on line {first})")));
            }
            entries.push((i + 1, key, value.trim()));
        }
        let file_preset = match entries.iter().find(|(_, k, _)| *k == "preset") {
            Some(&(line, _, v)) => Some(v.parse().map_err(|m| err(line, m))?),
            None => None,
        };
        let mut config = Self::preset(preset.or(file_preset).unwrap_or(Preset::Paper));
        for &(line, key, value) in &entries {
            if key != "preset" {
                config.set(key, value).map_err(|m| err(line, m))?;
            }
        }
        config.validate().map_err(|m| err(0, m))?;
        Ok(config)
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let a = &self.augment;
        let t = &self.train.optimizer;
        let e = &self.explain;
        vec![
            ("preset", self.preset.to_string()),
            ("seed", self.seed.to_string()),
            (
                "data.path",
                self.data
                    .path
                    .as_ref()
                    .map_or(String::new(), |p| p.display().to_string()),
            ),
            ("data.height", self.data.height.to_string()),
            ("data.width", self.data.width.to_string()),
            ("data.synthetic_counts", list(&self.data.synthetic_counts)),
            (
                "split.preset",
                match self.split.kind {
                    SplitKind::Paper => "paper",
                    SplitKind::Fraction => "fraction",
                }
                .into(),
            ),
            ("split.train_fraction", self.split.train_fraction.to_string()),
            (
                "augment.targets",
                match &a.targets {
                    ExpansionTargets::None => "none".into(),
                    ExpansionTargets::Paper => "paper".into(),
                    ExpansionTargets::BalanceToMax => "balance".into(),
                    ExpansionTargets::Explicit(t) => list(t),
                },
            ),
            ("augment.rescale", a.rescale.to_string()),
            ("augment.featurewise_center", a.featurewise_center.to_string()),
            (
                "augment.featurewise_std_normalization",
                a.featurewise_std_normalization.to_string(),
            ),
            ("augment.zca_whitening", a.zca_whitening.to_string()),
            ("augment.rotation_range", a.rotation_range.to_string()),
            ("augment.width_shift_range", a.width_shift_range.to_string()),
            ("augment.height_shift_range", a.height_shift_range.to_string()),
            ("augment.shear_range", a.shear_range.to_string()),
            ("augment.zoom_range", a.zoom_range.to_string()),
            ("augment.horizontal_flip", a.horizontal_flip.to_string()),
            ("augment.vertical_flip", a.vertical_flip.to_string()),
            ("augment.fill_mode", "nearest".into()),
            ("model.conv_widths", list(&self.model.conv)),
            ("model.dense_width", self.model.dense.to_string()),
            ("ensemble.combiner", self.combiner.to_string()),
            ("train.optimizer", t.kind.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.rho", t.rho.to_string()),
            ("train.beta1", t.beta1.to_string()),
            ("train.beta2", t.beta2.to_string()),
            ("train.epsilon", t.epsilon.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("explain.samples", e.samples.to_string()),
            ("explain.kernel_width", e.kernel_width.to_string()),
            ("explain.lambda", e.lambda.to_string()),
            (
                "explain.segmentation",
                match e.segmentation {
                    SegmentationKind::Grid => "grid",
                    SegmentationKind::Slic => "slic",
                }
                .into(),
            ),
            ("explain.grid_size", e.grid_size.to_string()),
            ("explain.slic_target", e.slic_target.to_string()),
            ("explain.slic_compactness", e.slic_compactness.to_string()),
            ("explain.slic_iterations", e.slic_iterations.to_string()),
            ("explain.top_regions", e.top_regions.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
        ]
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let a = &mut self.augment;
        let t = &mut self.train.optimizer;
        let e = &mut self.explain;
        match key {
            "preset" => self.preset = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "data.path" => {
                self.data.path = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "data.height" => self.data.height = num(key, value)?,
            "data.width" => self.data.width = num(key, value)?,
            "data.synthetic_counts" => self.data.synthetic_counts = array(key, value)?,
            "split.preset" => {
                self.split.kind = match value {
                    "paper" => SplitKind::Paper,
                    "fraction" => SplitKind::Fraction,
                    _ => return Err(format!("{key}: expected paper or fraction, got {value:?}")),
                }
            }
            "split.train_fraction" => self.split.train_fraction = num(key, value)?,
            "augment.targets" => {
                a.targets = match value {
                    "none" => ExpansionTargets::None,
                    "paper" => ExpansionTargets::Paper,
                    "balance" => ExpansionTargets::BalanceToMax,
                    _ => ExpansionTargets::Explicit(array(key, value)?),
                }
            }
            "augment.rescale" => a.rescale = num(key, value)?,
            "augment.featurewise_center" => a.featurewise_center = num(key, value)?,
            "augment.featurewise_std_normalization" => {
                a.featurewise_std_normalization = num(key, value)?
            }
            "augment.zca_whitening" => a.zca_whitening = num(key, value)?,
            "augment.rotation_range" => a.rotation_range = num(key, value)?,
            "augment.width_shift_range" => a.width_shift_range = num(key, value)?,
            "augment.height_shift_range" => a.height_shift_range = num(key, value)?,
            "augment.shear_range" => a.shear_range = num(key, value)?,
            "augment.zoom_range" => a.zoom_range = num(key, value)?,
            "augment.horizontal_flip" => a.horizontal_flip = num(key, value)?,
            "augment.vertical_flip" => a.vertical_flip = num(key, value)?,
            "augment.fill_mode" => {
                if value != "nearest" {
                    return Err(format!("{key}: only nearest is supported, got {value:?}"));
                }
            }
            "model.conv_widths" => self.model.conv = array(key, value)?,
            "model.dense_width" => self.model.dense = num(key, value)?,
            "ensemble.combiner" => self.combiner = value.parse().map_err(|e| format!("{key}: {e}"))?,
            "train.optimizer" => {
                t.kind = value.parse::<OptimizerKind>().map_err(|e| format!("{key}: {e}"))?
            }
            "train.learning_rate" => t.learning_rate = num(key, value)?,
            "train.rho" => t.rho = num(key, value)?,
            "train.beta1" => t.beta1 = num(key, value)?,
            "train.beta2" => t.beta2 = num(key, value)?,
            "train.epsilon" => t.epsilon = num(key, value)?,
            "train.epochs" => self.train.epochs = num(key, value)?,
            "train.batch_size" => self.train.batch_size = num(key, value)?,
            "explain.samples" => e.samples = num(key, value)?,
            "explain.kernel_width" => e.kernel_width = num(key, value)?,
            "explain.lambda" => e.lambda = num(key, value)?,
            "explain.segmentation" => {
                e.segmentation = match value {
                    "grid" => SegmentationKind::Grid,
                    "slic" => SegmentationKind::Slic,
                    _ => return Err(format!("{key}: expected grid or slic, got {value:?}")),
                }
            }
            "explain.grid_size" => e.grid_size = num(key, value)?,
            "explain.slic_target" => e.slic_target = num(key, value)?,
            "explain.slic_compactness" => e.slic_compactness = num(key, value)?,
            "explain.slic_iterations" => e.slic_iterations = num(key, value)?,
            "explain.top_regions" => e.top_regions = num(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(format!("unknown key {key}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.data.height == 0 || self.data.width == 0 {
            return Err("data.height and data.width must be positive".into());
        }
        if self.split.kind == SplitKind::Fraction
            && !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0)
        {
            return Err(format!(
                "split.train_fraction = {} must lie in (0, 1)",
                self.split.train_fraction
            ));
        }
        self.augment.validate().map_err(|e| e.to_string())?;
        self.train.optimizer.validate().map_err(|e| e.to_string())?;
        if self.model.conv.contains(&0) || self.model.dense == 0 {
            return Err("model widths must be positive".into());
        }
        if self.train.batch_size == 0 {
            return Err("train.batch_size must be at least 1".into());
        }
        let e = &self.explain;
        if e.samples == 0 || e.top_regions == 0 {
            return Err("explain.samples and explain.top_regions must be at least 1".into());
        }
        if !(e.kernel_width > 0.0) || !(e.lambda >= 0.0) {
            return Err("explain.kernel_width must be positive and explain.lambda non-negative".into());
        }
        Ok(())
    }

    /// The file form of this config; `parse` reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (key, value) in self.entries() {
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }
}

/// Command-line overrides, applied after the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    /// Switching optimizer also resets its hyperparameters to that
    /// optimizer's defaults.
    pub optimizer: Option<OptimizerKind>,
    pub combiner: Option<CombinerMode>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.train.epochs = epochs;
        }
        if let Some(kind) = self.optimizer {
            if kind != config.train.optimizer.kind {
                config.train.optimizer = OptimizerConfig::defaults(kind);
            }
        }
        if let Some(combiner) = self.combiner {
            config.combiner = combiner;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate().map_err(CliError::Override)
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn array<const N: usize>(key: &str, value: &str) -> Result<[usize; N], String> {
    let parts: Vec<usize> = value
        .split(',')
        .map(|p| num(key, p.trim()))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<usize>| format!("{key}: expected {N} values, got {}", v.len()))
}
