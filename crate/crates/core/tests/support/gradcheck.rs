//! Central-difference checks of analytic gradients, in f64.
//!
//! Points where a perturbation flips a ReLU sign or a max-pool argmax are
//! not differentiable on the probed interval; they are skipped and counted.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use wbc_core::ensemble::{build_member, MemberConfig, MemberId, TrunkWidths};
use wbc_core::nn::{ops, ComputeGraph, LayerSpec, Mode, Trace};
use wbc_core::{rng, Tensor};

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: u64 = 20;
/// Member inputs are scaled down so curvature keeps the O(h²) truncation
/// error below tolerance.
pub const MEMBER_INPUT_SCALE: f64 = 0.5;

#[derive(Debug, Default)]
pub struct Report {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl Report {
    fn merge(&mut self, other: Report) {
        self.max_rel = self.max_rel.max(other.max_rel);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }

    /// Below tolerance, with at most one skipped probe per ten checked.
    pub fn passes(&self) -> bool {
        self.checked > 0 && self.skipped * 10 <= self.checked && self.max_rel < TOLERANCE
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-8 {
        (a - n).abs()
    } else {
        (a - n).abs() / scale
    }
}

fn kink_pattern(graph: &ComputeGraph<f64>, trace: &Trace<f64>) -> Vec<usize> {
    let mut pattern = Vec::new();
    for (i, spec) in graph.specs().iter().enumerate() {
        let x = &trace.activations()[i];
        match *spec {
            LayerSpec::Relu => pattern.extend(x.values().iter().map(|&v| usize::from(v > 0.0))),
            LayerSpec::MaxPool2d { window, stride } => {
                pattern.extend(ops::maxpool2d(x, window, stride).unwrap().1)
            }
            _ => {}
        }
    }
    pattern
}

trait Loss {
    fn value(&self, out: &[f64]) -> f64;
    fn grad(&self, out: &[f64]) -> Vec<f64>;
}

/// `Σ cᵢ yᵢ + ½ Σ yᵢ²`
struct Quadratic(Vec<f64>);

impl Loss for Quadratic {
    fn value(&self, out: &[f64]) -> f64 {
        out.iter().zip(&self.0).map(|(y, c)| c * y + 0.5 * y * y).sum()
    }
    fn grad(&self, out: &[f64]) -> Vec<f64> {
        out.iter().zip(&self.0).map(|(y, c)| c + y).collect()
    }
}

struct CrossEntropy(usize);

impl Loss for CrossEntropy {
    fn value(&self, out: &[f64]) -> f64 {
        ops::cross_entropy(out, self.0).unwrap()
    }
    fn grad(&self, out: &[f64]) -> Vec<f64> {
        ops::cross_entropy_grad(out, self.0).unwrap()
    }
}

fn probe(
    graph: &ComputeGraph<f64>,
    input: &Tensor<f64>,
    loss: &dyn Loss,
    dropout_seed: u64,
) -> (f64, Vec<usize>) {
    let trace = graph
        .forward_trace(input, Mode::Train, &mut rng::stream(dropout_seed))
        .unwrap();
    (loss.value(trace.output().values()), kink_pattern(graph, &trace))
}

fn check_graph(
    graph: &mut ComputeGraph<f64>,
    input: &Tensor<f64>,
    loss: &dyn Loss,
    dropout_seed: u64,
) -> Report {
    let trace = graph
        .forward_trace(input, Mode::Train, &mut rng::stream(dropout_seed))
        .unwrap();
    let out = trace.output();
    let seed_grad = Tensor::new(out.shape().to_vec(), loss.grad(out.values())).unwrap();
    let (param_grads, input_grad) = graph.trace_gradients(&trace, &seed_grad).unwrap();
    let base = kink_pattern(graph, &trace);
    let mut report = Report::default();

    let mut compare = |analytic: f64, plus: (f64, Vec<usize>), minus: (f64, Vec<usize>)| {
        if plus.1 != base || minus.1 != base {
            report.skipped += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * STEP);
        report.max_rel = report.max_rel.max(rel_error(analytic, numeric));
        report.checked += 1;
    };

    for (t, grads) in param_grads.iter().enumerate() {
        for (k, &analytic) in grads.iter().enumerate() {
            let original = graph.params().nth(t).unwrap().values()[k];
            graph.params_mut()[t].values_mut()[k] = original + STEP;
            let plus = probe(graph, input, loss, dropout_seed);
            graph.params_mut()[t].values_mut()[k] = original - STEP;
            let minus = probe(graph, input, loss, dropout_seed);
            graph.params_mut()[t].values_mut()[k] = original;
            compare(analytic, plus, minus);
        }
    }
    let mut x = input.clone();
    for k in 0..x.numel() {
        let original = x.values()[k];
        x.values_mut()[k] = original + STEP;
        let plus = probe(graph, &x, loss, dropout_seed);
        x.values_mut()[k] = original - STEP;
        let minus = probe(graph, &x, loss, dropout_seed);
        x.values_mut()[k] = original;
        compare(input_grad.values()[k], plus, minus);
    }
    report
}

fn random_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let values = (0..n).map(|_| StandardNormal.sample(r)).collect();
    Tensor::new(shape.to_vec(), values).unwrap()
}

/// Builds a graph with random weights and biases.
fn random_graph(shape: &[usize], specs: &[LayerSpec], seed: u64) -> ComputeGraph<f64> {
    let mut r = rng::stream(seed);
    let mut g = ComputeGraph::<f64>::new(shape, specs, &mut r).unwrap();
    for p in g.params_mut() {
        for v in p.values_mut() {
            *v = StandardNormal.sample(&mut r);
            *v *= 0.5;
        }
    }
    g
}

/// Checks a layer stack over [`SEEDS`] random graphs and inputs.
pub fn layer_report(shape: &[usize], specs: &[LayerSpec], cross_entropy: bool) -> Report {
    let mut total = Report::default();
    for seed in 0..SEEDS {
        let mut g = random_graph(shape, specs, seed);
        let mut r = rng::substream(seed, &[7]);
        let input = random_tensor(shape, &mut r);
        let n_out: usize = g.output_shape().iter().product();
        let loss: Box<dyn Loss> = if cross_entropy {
            Box::new(CrossEntropy(r.random_range(0..n_out)))
        } else {
            Box::new(Quadratic((0..n_out).map(|_| StandardNormal.sample(&mut r)).collect()))
        };
        total.merge(check_graph(&mut g, &input, loss.as_ref(), seed + 1000));
    }
    total
}

/// Checks a narrow 8×8 build of a member over [`SEEDS`] initializations.
pub fn member_report(id: MemberId) -> Report {
    let widths = TrunkWidths {
        conv: [2, 3, 4],
        dense: 6,
    };
    let cfg = MemberConfig::new(id, 8, 8, widths);
    let mut total = Report::default();
    for seed in 0..SEEDS {
        let mut g = build_member(&cfg, seed).unwrap().cast::<f64>();
        let mut r = rng::substream(seed, &[11]);
        let mut input = random_tensor(&cfg.input_shape, &mut r);
        input.values_mut().iter_mut().for_each(|v| *v *= MEMBER_INPUT_SCALE);
        let loss = CrossEntropy(r.random_range(0..cfg.classes));
        total.merge(check_graph(&mut g, &input, &loss, seed + 2000));
    }
    total
}

pub const fn conv(filters: usize, kernel: usize, stride: usize, padding: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel,
        stride,
        padding,
    }
}

pub fn small_conv_net() -> Vec<LayerSpec> {
    vec![
        conv(3, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { window: 2, stride: 2 },
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::Dense { units: 4 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 3 },
        LayerSpec::Softmax,
    ]
}

/// Every layer case plus the three members, by name.
pub fn suite() -> Vec<(String, Report)> {
    let pool = |window, stride| LayerSpec::MaxPool2d { window, stride };
    let cases: Vec<(&str, Vec<usize>, Vec<LayerSpec>, bool)> = vec![
        ("conv same", vec![2, 5, 5], vec![conv(3, 3, 1, 1)], false),
        ("conv strided", vec![3, 7, 6], vec![conv(2, 3, 2, 0)], false),
        ("pool 2/2", vec![2, 6, 6], vec![pool(2, 2)], false),
        ("pool 3/2", vec![2, 7, 7], vec![pool(3, 2)], false),
        ("relu", vec![3, 4, 4], vec![LayerSpec::Relu], false),
        ("dense", vec![2, 3, 3], vec![LayerSpec::Dense { units: 5 }], false),
        ("dense 2x2", vec![2], vec![LayerSpec::Dense { units: 2 }], false),
        ("dropout", vec![4, 3, 3], vec![LayerSpec::Dropout { rate: 0.3 }], false),
        ("softmax", vec![6], vec![LayerSpec::Softmax], false),
        (
            "softmax+ce",
            vec![5],
            vec![LayerSpec::Dense { units: 5 }, LayerSpec::Softmax],
            true,
        ),
        ("conv net", vec![2, 6, 6], small_conv_net(), true),
    ];
    let mut out: Vec<(String, Report)> = cases
        .into_iter()
        .map(|(name, shape, specs, ce)| (name.to_owned(), layer_report(&shape, &specs, ce)))
        .collect();
    for id in MemberId::ALL {
        out.push((format!("member {id}"), member_report(id)));
    }
    out
}
