use rand::RngCore;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::ops;
use super::Mode;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{argmax, Real, Tensor};

/// One layer of a member network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Relu,
    /// Fully connected; flattens its input.
    Dense {
        units: usize,
    },
    Dropout {
        rate: f64,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Output shape for a given input shape, or a geometry error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = |what: &str| match *input {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Geometry(format!(
                "{what} needs a C×H×W input, got {input:?}"
            ))),
        };
        match *self {
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let (_, h, w) = spatial("conv2d")?;
                if filters == 0 {
                    return Err(Error::Geometry("conv2d with zero filters".into()));
                }
                Ok(vec![
                    filters,
                    ops::window_extent(h, kernel, stride, padding)?,
                    ops::window_extent(w, kernel, stride, padding)?,
                ])
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let (c, h, w) = spatial("maxpool2d")?;
                if window > h || window > w {
                    return Err(Error::Geometry(format!(
                        "pool window {window} exceeds spatial extent {h}×{w}"
                    )));
                }
                Ok(vec![
                    c,
                    ops::window_extent(h, window, stride, 0)?,
                    ops::window_extent(w, window, stride, 0)?,
                ])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Dropout { rate } => {
                ops::check_rate(rate)?;
                Ok(input.to_vec())
            }
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(Error::Geometry("dense with zero units".into()));
                }
                Ok(vec![units])
            }
            LayerSpec::Softmax => match input {
                [_] => Ok(input.to_vec()),
                _ => Err(Error::Geometry(format!(
                    "softmax needs a vector input, got {input:?}"
                ))),
            },
        }
    }

    /// Shapes of the trainable tensors for this layer.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                filters, kernel, ..
            } => vec![vec![filters, input[0], kernel, kernel], vec![filters]],
            LayerSpec::Dense { units } => {
                vec![vec![input.iter().product(), units], vec![units]]
            }
            _ => Vec::new(),
        }
    }

    fn fan_in(&self, input: &[usize]) -> usize {
        match *self {
            LayerSpec::Conv2d { kernel, .. } => input[0] * kernel * kernel,
            LayerSpec::Dense { .. } => input.iter().product(),
            _ => 0,
        }
    }
}

#[derive(Clone, Debug)]
struct Layer<T> {
    spec: LayerSpec,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    params: Vec<Tensor<T>>,
}

#[derive(Clone, Debug)]
enum Aux<T> {
    None,
    Argmax(Vec<usize>),
    Mask(Option<Vec<T>>),
}

/// Activations recorded by one forward pass, consumed by backward.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    activations: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    version: u64,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("trace holds the input")
    }

    /// The input followed by the output of every layer.
    pub fn activations(&self) -> &[Tensor<T>] {
        &self.activations
    }
}

/// Result of a loss backward pass.
#[derive(Clone, Debug)]
pub struct Backward<T> {
    pub loss: T,
    pub input_grad: Tensor<T>,
}

/// Summed per-sample gradients over a batch.
#[derive(Clone, Debug)]
pub struct BatchGradients<T> {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
    pub grads: Vec<Vec<T>>,
}

/// Samples per work unit in [`ComputeGraph::batch_gradients`]. Fixed so the
/// reduction order never depends on the thread count.
const CHUNK: usize = 4;

/// A sequential network with parameters and a forward cache.
#[derive(Clone, Debug)]
pub struct ComputeGraph<T = f32> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    mode: Mode,
    cache: Option<Trace<T>>,
    version: u64,
}

impl<T: Real> ComputeGraph<T> {
    /// Builds the graph with He-normal weights (std `sqrt(2/fan_in)`) and
    /// zero biases.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], rng: &mut dyn RngCore) -> Result<Self> {
        let mut graph = Self::zeroed(input_shape, specs)?;
        for layer in &mut graph.layers {
            if layer.params.is_empty() {
                continue;
            }
            let std = (2.0 / layer.spec.fan_in(&layer.input_shape) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in layer.params[0].values_mut() {
                *v = T::of(normal.sample(rng));
            }
        }
        Ok(graph)
    }

    /// Builds the graph with every parameter set to zero.
    pub fn zeroed(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Geometry(format!(
                "invalid input shape {input_shape:?}"
            )));
        }
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let output_shape = spec.output_shape(&shape)?;
            let params = spec
                .param_shapes(&shape)
                .iter()
                .map(|s| Tensor::zeros(s))
                .collect();
            layers.push(Layer {
                spec: *spec,
                input_shape: shape.clone(),
                output_shape: output_shape.clone(),
                params,
            });
            shape = output_shape;
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            mode: Mode::Train,
            cache: None,
            version: 0,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map_or(&self.input_shape[..], |l| &l.output_shape[..])
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Per-layer `(spec, input shape, output shape)`.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (LayerSpec, &[usize], &[usize])> {
        self.layers
            .iter()
            .map(|l| (l.spec, &l.input_shape[..], &l.output_shape[..]))
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::numel).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    /// Mutable parameter access. Invalidates any cached forward pass.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut())
            .collect()
    }

    /// Replaces all parameter values; shapes must match.
    pub fn set_params(&mut self, values: Vec<Vec<T>>) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors supplied for {}",
                values.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.numel() != v.len() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter of shape {:?} given {} values",
                    p.shape(),
                    v.len()
                )));
            }
            p.values_mut().copy_from_slice(&v);
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.clear_grad();
        }
    }

    /// Converts the graph, parameters included, to another precision.
    pub fn cast<U: Real>(&self) -> ComputeGraph<U> {
        ComputeGraph {
            input_shape: self.input_shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    input_shape: l.input_shape.clone(),
                    output_shape: l.output_shape.clone(),
                    params: l.params.iter().map(Tensor::cast).collect(),
                })
                .collect(),
            mode: self.mode,
            cache: None,
            version: 0,
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::Geometry(format!(
                "graph expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Pure forward pass that records every activation.
    pub fn forward_trace(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        x.clear_grad();
        activations.push(x);
        for layer in &self.layers {
            let x = activations.last().expect("non-empty");
            let (y, a) = match layer.spec {
                LayerSpec::Conv2d {
                    stride, padding, ..
                } => (
                    ops::conv2d(
                        x,
                        &layer.params[0],
                        layer.params[1].values(),
                        stride,
                        padding,
                    )?,
                    Aux::None,
                ),
                LayerSpec::MaxPool2d { window, stride } => {
                    let (y, arg) = ops::maxpool2d(x, window, stride)?;
                    (y, Aux::Argmax(arg))
                }
                LayerSpec::Relu => (ops::relu(x), Aux::None),
                LayerSpec::Dense { .. } => (
                    ops::dense(x, &layer.params[0], layer.params[1].values())?,
                    Aux::None,
                ),
                LayerSpec::Dropout { rate } => {
                    let (y, mask) = ops::dropout(x, rate, mode, rng)?;
                    (y, Aux::Mask(mask))
                }
                LayerSpec::Softmax => (
                    Tensor::new(x.shape().to_vec(), ops::softmax(x.values()))?,
                    Aux::None,
                ),
            };
            activations.push(y);
            aux.push(a);
        }
        Ok(Trace {
            activations,
            aux,
            version: self.version,
        })
    }

    /// Eval-mode forward pass without touching the cache.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        // eval mode never draws from the stream
        let mut unused = rng::stream(0);
        let mut trace = self.forward_trace(input, Mode::Eval, &mut unused)?;
        Ok(trace.activations.pop().expect("non-empty"))
    }

    /// Forward pass in the graph's current mode; caches activations for
    /// [`backward`](Self::backward).
    pub fn forward(&mut self, input: &Tensor<T>, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let trace = self.forward_trace(input, self.mode, rng)?;
        let out = trace.output().clone();
        self.cache = Some(trace);
        Ok(out)
    }

    /// Cross-entropy of the cached output against `label`, back-propagated
    /// into every parameter's gradient slot.
    pub fn backward(&mut self, label: usize) -> Result<Backward<T>> {
        let probs = self.cache.as_ref().ok_or(Error::StaleCache)?.output();
        let loss = ops::cross_entropy(probs.values(), label)?;
        let seed = Tensor::new(
            probs.shape().to_vec(),
            ops::cross_entropy_grad(probs.values(), label)?,
        )?;
        let input_grad = self.backward_from(&seed)?;
        Ok(Backward { loss, input_grad })
    }

    /// Back-propagates an arbitrary output gradient through the cached pass.
    /// Returns the gradient with respect to the input.
    pub fn backward_from(&mut self, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let trace = self.cache.take().ok_or(Error::StaleCache)?;
        if trace.version != self.version {
            return Err(Error::StaleCache);
        }
        let (grads, input_grad) = self.trace_gradients(&trace, output_grad)?;
        for (p, g) in self
            .layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut())
            .zip(grads)
        {
            p.set_grad(g)?;
        }
        Ok(input_grad)
    }

    /// Pure backward pass: parameter gradients (in [`params`](Self::params)
    /// order) and the input gradient.
    pub fn trace_gradients(
        &self,
        trace: &Trace<T>,
        output_grad: &Tensor<T>,
    ) -> Result<(Vec<Vec<T>>, Tensor<T>)> {
        if trace.version != self.version {
            return Err(Error::StaleCache);
        }
        if output_grad.numel() != trace.output().numel() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} values, output has {}",
                output_grad.numel(),
                trace.output().numel()
            )));
        }
        let mut per_layer: Vec<Vec<Vec<T>>> = vec![Vec::new(); self.layers.len()];
        let mut g = output_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.activations[i];
            g = match (&layer.spec, &trace.aux[i]) {
                (
                    LayerSpec::Conv2d {
                        stride, padding, ..
                    },
                    _,
                ) => {
                    let cg = ops::conv2d_backward(x, &layer.params[0], *stride, *padding, &g)?;
                    per_layer[i] = vec![cg.kernels, cg.bias];
                    cg.input
                }
                (LayerSpec::MaxPool2d { .. }, Aux::Argmax(arg)) => {
                    ops::maxpool2d_backward(x.shape(), arg, &g)?
                }
                (LayerSpec::Relu, _) => ops::relu_backward(x, &g)?,
                (LayerSpec::Dense { .. }, _) => {
                    let dg = ops::dense_backward(x, &layer.params[0], &g)?;
                    per_layer[i] = vec![dg.weights, dg.bias];
                    dg.input
                }
                (LayerSpec::Dropout { .. }, Aux::Mask(mask)) => {
                    ops::dropout_backward(mask.as_deref(), &g)
                }
                (LayerSpec::Softmax, _) => {
                    let probs = &trace.activations[i + 1];
                    Tensor::new(
                        probs.shape().to_vec(),
                        ops::softmax_backward(probs.values(), g.values()),
                    )?
                }
                _ => unreachable!("aux recorded by forward_trace matches layer kind"),
            };
        }
        Ok((per_layer.into_iter().flatten().collect(), g))
    }

    /// Summed cross-entropy gradients over `samples`, computed in parallel.
    ///
    /// `stream_seed(i)` seeds the dropout stream of the `i`-th sample, so the
    /// result is independent of scheduling. Also counts correct argmax
    /// predictions made by the same forward passes.
    pub fn batch_gradients<F>(
        &self,
        samples: &[(&Tensor<T>, usize)],
        mode: Mode,
        stream_seed: F,
    ) -> Result<BatchGradients<T>>
    where
        F: Fn(usize) -> u64 + Sync,
    {
        let zero_grads = || -> Vec<Vec<T>> {
            self.params()
                .map(|p| vec![T::zero(); p.numel()])
                .collect()
        };
        let partials: Vec<Result<BatchGradients<T>>> = samples
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut acc = BatchGradients {
                    loss_sum: 0.0,
                    correct: 0,
                    count: 0,
                    grads: zero_grads(),
                };
                for (j, &(input, label)) in chunk.iter().enumerate() {
                    let mut r = rng::stream(stream_seed(c * CHUNK + j));
                    let trace = self.forward_trace(input, mode, &mut r)?;
                    let probs = trace.output().values();
                    let loss = ops::cross_entropy(probs, label)?;
                    if argmax(probs) == label {
                        acc.correct += 1;
                    }
                    let seed = Tensor::new(
                        trace.output().shape().to_vec(),
                        ops::cross_entropy_grad(probs, label)?,
                    )?;
                    let (grads, _) = self.trace_gradients(&trace, &seed)?;
                    for (a, g) in acc.grads.iter_mut().zip(grads) {
                        for (x, y) in a.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                    acc.loss_sum += loss.to_f64_lossy();
                    acc.count += 1;
                }
                Ok(acc)
            })
            .collect();

        let mut total = BatchGradients {
            loss_sum: 0.0,
            correct: 0,
            count: 0,
            grads: zero_grads(),
        };
        for part in partials {
            let part = part?;
            total.loss_sum += part.loss_sum;
            total.correct += part.correct;
            total.count += part.count;
            for (a, g) in total.grads.iter_mut().zip(part.grads) {
                for (x, y) in a.iter_mut().zip(g) {
                    *x += y;
                }
            }
        }
        Ok(total)
    }

    /// Writes `scale · grads` into the parameter gradient slots.
    pub fn set_param_grads(&mut self, grads: Vec<Vec<T>>, scale: T) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch("gradient tensor count".into()));
        }
        for (p, mut g) in params.iter_mut().zip(grads) {
            for v in &mut g {
                *v *= scale;
            }
            p.set_grad(g)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d {
                filters: 2,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d {
                window: 2,
                stride: 2,
            },
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Dense { units: 3 },
            LayerSpec::Softmax,
        ]
    }

    #[test]
    fn shapes_chain() {
        let g = ComputeGraph::<f32>::zeroed(&[1, 4, 4], &small_specs()).unwrap();
        let shapes: Vec<_> = g.layer_shapes().collect();
        for w in shapes.windows(2) {
            assert_eq!(w[0].2, w[1].1);
        }
        assert_eq!(g.output_shape(), &[3]);
        assert_eq!(g.param_count(), 2 * 9 + 2 + 8 * 3 + 3);
    }

    #[test]
    fn collapsing_geometry_is_rejected() {
        let specs = [LayerSpec::MaxPool2d {
            window: 2,
            stride: 2,
        }; 3];
        assert!(matches!(
            ComputeGraph::<f32>::zeroed(&[1, 4, 4], &specs),
            Err(Error::Geometry(_))
        ));
        assert!(ComputeGraph::<f32>::zeroed(&[1, 4, 4], &[LayerSpec::Dropout { rate: 1.0 }]).is_err());
    }

    #[test]
    fn backward_without_forward_is_stale() {
        let mut r = rng::stream(0);
        let mut g = ComputeGraph::<f64>::new(&[1, 4, 4], &small_specs(), &mut r).unwrap();
        assert!(matches!(g.backward(0), Err(Error::StaleCache)));
        let x = Tensor::full(&[1, 4, 4], 0.5);
        g.forward(&x, &mut r).unwrap();
        g.backward(0).unwrap();
        // the cache is consumed
        assert!(matches!(g.backward(0), Err(Error::StaleCache)));
        // parameter mutation invalidates a pending pass
        g.forward(&x, &mut r).unwrap();
        g.params_mut()[0].values_mut()[0] += 1.0;
        assert!(matches!(g.backward(0), Err(Error::StaleCache)));
    }

    #[test]
    fn eval_forward_is_bit_deterministic() {
        let mut r = rng::stream(5);
        let g = ComputeGraph::<f32>::new(&[1, 4, 4], &small_specs(), &mut r).unwrap();
        let x = Tensor::new(vec![1, 4, 4], (0..16).map(|i| i as f32 * 0.1).collect()).unwrap();
        let a = g.predict(&x).unwrap();
        let b = g.predict(&x).unwrap();
        assert_eq!(
            a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn batch_gradients_match_sequential_backward() {
        let mut r = rng::stream(9);
        let mut g = ComputeGraph::<f64>::new(&[1, 4, 4], &small_specs(), &mut r).unwrap();
        let xs: Vec<Tensor<f64>> = (0..7)
            .map(|k| Tensor::from_f64(vec![1, 4, 4], &(0..16).map(|i| ((i * k) % 5) as f64 * 0.2).collect::<Vec<_>>()).unwrap())
            .collect();
        let samples: Vec<(&Tensor<f64>, usize)> = xs.iter().zip([0, 1, 2, 0, 1, 2, 0]).collect();
        let batch = g.batch_gradients(&samples, Mode::Train, |i| 100 + i as u64).unwrap();

        let mut expected: Vec<Vec<f64>> = g.params().map(|p| vec![0.0; p.numel()]).collect();
        let mut loss = 0.0;
        for (i, (x, y)) in samples.iter().enumerate() {
            let mut s = rng::stream(100 + i as u64);
            g.forward(x, &mut s).unwrap();
            loss += g.backward(*y).unwrap().loss;
            for (e, p) in expected.iter_mut().zip(g.params()) {
                for (a, b) in e.iter_mut().zip(p.grad().unwrap()) {
                    *a += b;
                }
            }
        }
        assert!((batch.loss_sum - loss).abs() < 1e-12);
        for (a, b) in batch.grads.iter().flatten().zip(expected.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
