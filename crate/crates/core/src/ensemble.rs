//! The three CNN members, their training loop, and probability combiners.
//!
//! All members share one trunk: three 3×3 conv blocks (stride 1, padding 1)
//! followed by a dense hidden layer and a 5-way softmax head. They differ
//! only in where max-pooling and dropout sit:
//!
//! | member | max-pool 2×2                  | dropout                           |
//! |--------|-------------------------------|-----------------------------------|
//! | A      | after every conv block        | 0.25 after every pool             |
//! | B      | after blocks 2 and 3          | 0.4 after the hidden dense layer  |
//! | C      | on the input, after block 3   | 0.1 after block 1, 0.5 after dense|

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{apply_standardization, Dataset, Image, StandardizationStats, CHANNELS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{ops, ComputeGraph, LayerSpec, Mode};
use crate::optim::{OptimizerConfig, OptimizerKind, OptimizerState};
use crate::rng;
use crate::tensor::{argmax, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemberId {
    A,
    B,
    C,
}

impl MemberId {
    pub const ALL: [MemberId; 3] = [MemberId::A, MemberId::B, MemberId::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for MemberId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(MemberId::A),
            "B" | "b" => Ok(MemberId::B),
            "C" | "c" => Ok(MemberId::C),
            other => Err(Error::InvalidParameter(format!("unknown member {other:?}"))),
        }
    }
}

/// Channel widths of the shared trunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrunkWidths {
    pub conv: [usize; 3],
    pub dense: usize,
}

impl Default for TrunkWidths {
    fn default() -> Self {
        Self {
            conv: [32, 64, 128],
            dense: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemberConfig {
    pub id: MemberId,
    pub layers: Vec<LayerSpec>,
    /// `[3, H, W]`.
    pub input_shape: [usize; 3],
    pub classes: usize,
}

impl MemberConfig {
    pub fn new(id: MemberId, height: usize, width: usize, widths: TrunkWidths) -> Self {
        let conv = |filters| LayerSpec::Conv2d {
            filters,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let pool = LayerSpec::MaxPool2d {
            window: 2,
            stride: 2,
        };
        let drop = |rate| LayerSpec::Dropout { rate };
        let [c1, c2, c3] = widths.conv;
        let (relu, dense) = (LayerSpec::Relu, LayerSpec::Dense { units: widths.dense });
        let head = LayerSpec::Dense { units: NUM_CLASSES };
        let layers = match id {
            MemberId::A => vec![
                conv(c1), relu, pool, drop(0.25),
                conv(c2), relu, pool, drop(0.25),
                conv(c3), relu, pool, drop(0.25),
                dense, relu, head, LayerSpec::Softmax,
            ],
            MemberId::B => vec![
                conv(c1), relu,
                conv(c2), relu, pool,
                conv(c3), relu, pool,
                dense, relu, drop(0.4), head, LayerSpec::Softmax,
            ],
            MemberId::C => vec![
                pool,
                conv(c1), relu, drop(0.1),
                conv(c2), relu,
                conv(c3), relu, pool,
                dense, relu, drop(0.5), head, LayerSpec::Softmax,
            ],
        };
        Self {
            id,
            layers,
            input_shape: [CHANNELS, height, width],
            classes: NUM_CLASSES,
        }
    }

    pub fn dropout_rates(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dropout { rate } => Some(*rate),
                _ => None,
            })
            .collect()
    }

    /// Layer positions of the max-pool layers.
    pub fn pool_positions(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::MaxPool2d { .. }))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Initialized graph for a member. Fails when pooling collapses the spatial
/// extent before the dense head.
pub fn build_member(config: &MemberConfig, seed: u64) -> Result<ComputeGraph<f32>> {
    let mut r = rng::stream(seed);
    ComputeGraph::new(&config.input_shape, &config.layers, &mut r)
}

/// Network inputs with their labels.
#[derive(Clone, Debug, Default)]
pub struct TensorSet {
    pub inputs: Vec<Tensor<f32>>,
    pub labels: Vec<usize>,
}

impl TensorSet {
    pub fn from_dataset(dataset: &Dataset, stats: &StandardizationStats) -> Self {
        Self {
            inputs: dataset.to_tensors(stats),
            labels: dataset.labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after the first epoch whose eval accuracy reaches this value.
    pub stop_at_eval_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::adam(),
            epochs: 50,
            batch_size: 64,
            seed: 0,
            stop_at_eval_accuracy: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean train-mode loss over the epoch's batches.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub eval_loss: f64,
    pub eval_accuracy: f64,
    pub wall_clock: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRun {
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

/// Eval-mode mean cross-entropy and accuracy.
pub fn evaluate_member(graph: &ComputeGraph<f32>, set: &TensorSet) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_sample: Vec<Result<(f64, bool)>> = set
        .inputs
        .par_iter()
        .zip(&set.labels)
        .map(|(x, &y)| {
            let p = graph.predict(x)?;
            let loss = f64::from(ops::cross_entropy(p.values(), y)?);
            Ok((loss, argmax(p.values()) == y))
        })
        .collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for r in per_sample {
        let (l, c) = r?;
        loss += l;
        correct += usize::from(c);
    }
    let n = set.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch training with a per-epoch shuffle and an eval pass after every
/// epoch. Dropout streams are derived from `(seed, epoch, batch, position)`.
pub fn train_member(
    graph: &mut ComputeGraph<f32>,
    train: &TensorSet,
    eval: &TensorSet,
    config: &TrainConfig,
) -> Result<TrainingRun> {
    if config.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be at least 1".into()));
    }
    let mut run = TrainingRun {
        optimizer: config.optimizer.kind,
        seed: config.seed,
        epochs: Vec::new(),
    };
    if config.epochs == 0 {
        return Ok(run);
    }
    if train.is_empty() || eval.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut optimizer = OptimizerState::<f32>::new(config.optimizer)?;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::substream(config.seed, &[1, epoch as u64]));

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<(&Tensor<f32>, usize)> = batch
                .iter()
                .map(|&i| (&train.inputs[i], train.labels[i]))
                .collect();
            let seed = config.seed;
            let grads = graph.batch_gradients(&samples, Mode::Train, |j| {
                rng::derive_seed(seed, &[2, epoch as u64, b as u64, j as u64])
            })?;
            if !grads.loss_sum.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                });
            }
            loss_sum += grads.loss_sum;
            correct += grads.correct;
            graph.set_param_grads(grads.grads, 1.0 / batch.len() as f32)?;
            optimizer.step(&mut graph.params_mut())?;
        }
        graph.zero_grad();

        let (eval_loss, eval_accuracy) = evaluate_member(graph, eval)?;
        if !eval_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let n = train.len() as f64;
        run.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            eval_loss,
            eval_accuracy,
            wall_clock: started.elapsed(),
        });
        if config
            .stop_at_eval_accuracy
            .is_some_and(|target| eval_accuracy >= target)
        {
            break;
        }
    }
    Ok(run)
}

/// Softmax output of a member for one standardized input.
pub fn predict_member(graph: &ComputeGraph<f32>, input: &Tensor<f32>) -> Result<Vec<f64>> {
    Ok(graph.predict(input)?.values().iter().map(|&p| f64::from(p)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CombinerMode {
    Average,
    Weighted,
    /// The single member vector with the largest top probability.
    MaxConfidence,
}

impl fmt::Display for CombinerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CombinerMode::Average => "average",
            CombinerMode::Weighted => "weighted",
            CombinerMode::MaxConfidence => "max_confidence",
        })
    }
}

impl FromStr for CombinerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "average" => Ok(CombinerMode::Average),
            "weighted" => Ok(CombinerMode::Weighted),
            "max_confidence" => Ok(CombinerMode::MaxConfidence),
            other => Err(Error::InvalidParameter(format!("unknown combiner {other:?}"))),
        }
    }
}

/// Tolerance on the sum of weighted-mode weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

pub fn combine(member_probs: &[Vec<f64>], mode: CombinerMode, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let first = member_probs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no member outputs to combine".into()))?;
    let k = first.len();
    if member_probs.iter().any(|p| p.len() != k) {
        return Err(Error::ShapeMismatch("member outputs differ in length".into()));
    }
    match mode {
        CombinerMode::Average => {
            let n = member_probs.len() as f64;
            Ok((0..k)
                .map(|c| member_probs.iter().map(|p| p[c]).sum::<f64>() / n)
                .collect())
        }
        CombinerMode::Weighted => {
            let w = weights
                .ok_or_else(|| Error::InvalidParameter("weighted mode needs weights".into()))?;
            validate_weights(w, member_probs.len())?;
            Ok((0..k)
                .map(|c| member_probs.iter().zip(w).map(|(p, &wi)| wi * p[c]).sum())
                .collect())
        }
        CombinerMode::MaxConfidence => {
            let top = |p: &Vec<f64>| p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let best = member_probs
                .iter()
                .enumerate()
                .fold(0, |best, (i, p)| if top(p) > top(&member_probs[best]) { i } else { best });
            Ok(member_probs[best].clone())
        }
    }
}

pub fn validate_weights(weights: &[f64], members: usize) -> Result<()> {
    if weights.len() != members {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {members} members",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidParameter("member weights must be non-negative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightSum(sum));
    }
    Ok(())
}

/// Accuracy-proportional weights; uniform when every accuracy is zero.
pub fn fit_member_weights(accuracies: &[f64]) -> Vec<f64> {
    let total: f64 = accuracies.iter().sum();
    if total > 0.0 {
        accuracies.iter().map(|a| a / total).collect()
    } else {
        vec![1.0 / accuracies.len() as f64; accuracies.len()]
    }
}

/// A trained member.
#[derive(Clone, Debug)]
pub struct Member {
    pub config: MemberConfig,
    pub graph: ComputeGraph<f32>,
}

/// Three members plus the preprocessing and combination they are used with.
#[derive(Clone, Debug)]
pub struct EnsembleModel {
    pub members: Vec<Member>,
    pub stats: StandardizationStats,
    pub combiner: CombinerMode,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl EnsembleModel {
    pub fn new(members: Vec<Member>, stats: StandardizationStats, combiner: CombinerMode, seed: u64) -> Self {
        let n = members.len();
        Self {
            members,
            stats,
            combiner,
            weights: vec![1.0 / n as f64; n],
            seed,
        }
    }

    /// Member softmax outputs for one standardized input.
    pub fn member_probabilities(&self, input: &Tensor<f32>) -> Result<Vec<Vec<f64>>> {
        self.members
            .iter()
            .map(|m| predict_member(&m.graph, input))
            .collect()
    }

    /// Combined probabilities for one standardized input.
    pub fn predict(&self, input: &Tensor<f32>) -> Result<Vec<f64>> {
        let probs = self.member_probabilities(input)?;
        combine(&probs, self.combiner, Some(&self.weights))
    }

    /// Combined probabilities for a raw `[0, 1]` image.
    pub fn predict_image(&self, image: &Image) -> Result<Vec<f64>> {
        self.predict(&apply_standardization(image, &self.stats).to_tensor())
    }

    pub fn predict_set(&self, set: &TensorSet) -> Result<Vec<Vec<f64>>> {
        set.inputs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn member_accuracies(&self, set: &TensorSet) -> Result<Vec<f64>> {
        self.members
            .iter()
            .map(|m| evaluate_member(&m.graph, set).map(|(_, acc)| acc))
            .collect()
    }

    /// Sets accuracy-proportional weights from a validation set.
    pub fn fit_weights(&mut self, validation: &TensorSet) -> Result<Vec<f64>> {
        let acc = self.member_accuracies(validation)?;
        self.weights = fit_member_weights(&acc);
        Ok(acc)
    }
}

/// Builds and trains every member in parallel. Member `i` is initialized
/// from `(seed, i, 0)` and trained with `(seed, i, 1)`.
pub fn train_members(
    configs: &[MemberConfig],
    train: &TensorSet,
    eval: &TensorSet,
    config: &TrainConfig,
) -> Result<Vec<(Member, TrainingRun)>> {
    configs
        .par_iter()
        .map(|mc| {
            let i = mc.id.index() as u64;
            let mut graph = build_member(mc, rng::derive_seed(config.seed, &[i, 0]))?;
            let member_cfg = TrainConfig {
                seed: rng::derive_seed(config.seed, &[i, 1]),
                ..config.clone()
            };
            let run = train_member(&mut graph, train, eval, &member_cfg)?;
            Ok((
                Member {
                    config: mc.clone(),
                    graph,
                },
                run,
            ))
        })
        .collect()
}
