//! Forward and backward kernels for each layer kind, on single samples.
//!
//! Spatial tensors are `C×H×W`. Convolution is cross-correlation (no kernel
//! flip). All kernels are pure functions of their arguments.

use rand::{Rng, RngCore};

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Floor added inside the logarithm of the cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

fn chw(t: &Tensor<impl Real>, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::ShapeMismatch(format!(
            "{what} expects a C×H×W tensor, got shape {s:?}"
        ))),
    }
}

/// Output extent of a sliding window along one axis.
pub fn window_extent(len: usize, window: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || window == 0 {
        return Err(Error::Geometry(format!(
            "window {window} and stride {stride} must be positive"
        )));
    }
    let padded = len + 2 * padding;
    if window > padded {
        return Err(Error::Geometry(format!(
            "window {window} exceeds padded extent {padded}"
        )));
    }
    Ok((padded - window) / stride + 1)
}

/// Dot product over eight interleaved partial sums, which lets the compiler
/// vectorize; the summation order is fixed, so results stay deterministic.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x * y)
        .fold(T::zero(), |s, v| s + v);
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// `dst += k · src`
#[inline]
fn axpy<T: Real>(dst: &mut [T], k: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

/// Output channels processed together so each im2col row is streamed once
/// per block rather than once per channel.
const CHANNEL_BLOCK: usize = 4;

struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Calls `f(row, col, input_index)` for every in-bounds im2col cell.
    #[inline]
    fn for_each_cell(&self, mut f: impl FnMut(usize, usize, usize)) {
        let k = self.kernel;
        for ci in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..self.out_h {
                        let y = (oy * self.stride + ky) as isize - self.padding as isize;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        let base = (ci * self.height + y as usize) * self.width;
                        for ox in 0..self.out_w {
                            let x = (ox * self.stride + kx) as isize - self.padding as isize;
                            if x < 0 || x >= self.width as isize {
                                continue;
                            }
                            f(row, oy * self.out_w + ox, base + x as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Real>(&self, input: &[T]) -> Vec<T> {
        let cols = self.cols();
        let mut out = vec![T::zero(); self.rows() * cols];
        self.for_each_cell(|r, p, i| out[r * cols + p] = input[i]);
        out
    }
}

fn conv_geometry<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias_len: usize,
    stride: usize,
    padding: usize,
) -> Result<(ConvGeometry, usize)> {
    let (c, h, w) = chw(input, "conv2d")?;
    let (c_out, c_in, kh, kw) = match *kernels.shape() {
        [a, b, c, d] => (a, b, c, d),
        ref s => {
            return Err(Error::ShapeMismatch(format!(
                "conv2d kernels must be C_out×C_in×k×k, got {s:?}"
            )))
        }
    };
    if kh != kw {
        return Err(Error::ShapeMismatch(format!(
            "conv2d kernels must be square, got {kh}×{kw}"
        )));
    }
    if c_in != c {
        return Err(Error::ShapeMismatch(format!(
            "conv2d kernels expect {c_in} input channels, input has {c}"
        )));
    }
    if bias_len != c_out {
        return Err(Error::ShapeMismatch(format!(
            "conv2d bias has {bias_len} entries for {c_out} filters"
        )));
    }
    let out_h = window_extent(h, kh, stride, padding)?;
    let out_w = window_extent(w, kw, stride, padding)?;
    Ok((
        ConvGeometry {
            channels: c,
            height: h,
            width: w,
            kernel: kh,
            stride,
            padding,
            out_h,
            out_w,
        },
        c_out,
    ))
}

pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (geo, c_out) = conv_geometry(input, kernels, bias.len(), stride, padding)?;
    let cols = geo.im2col(input.values());
    let (rows, p) = (geo.rows(), geo.cols());
    let k = kernels.values();
    let mut out = vec![T::zero(); c_out * p];
    for (block, dst) in out.chunks_mut(CHANNEL_BLOCK * p).enumerate() {
        let first = block * CHANNEL_BLOCK;
        for (j, d) in dst.chunks_mut(p).enumerate() {
            d.fill(bias[first + j]);
        }
        for r in 0..rows {
            let src = &cols[r * p..(r + 1) * p];
            for (j, d) in dst.chunks_mut(p).enumerate() {
                let kv = k[(first + j) * rows + r];
                if kv != T::zero() {
                    axpy(d, kv, src);
                }
            }
        }
    }
    Tensor::new(vec![c_out, geo.out_h, geo.out_w], out)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Vec<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let c_out = kernels.shape().first().copied().unwrap_or(0);
    let (geo, c_out) = conv_geometry(input, kernels, c_out, stride, padding)?;
    let (rows, p) = (geo.rows(), geo.cols());
    if grad_out.numel() != c_out * p {
        return Err(Error::ShapeMismatch(format!(
            "conv2d upstream gradient has {} values, expected {}",
            grad_out.numel(),
            c_out * p
        )));
    }
    let g = grad_out.values();
    let k = kernels.values();
    let cols = geo.im2col(input.values());

    let bias: Vec<T> = (0..c_out)
        .map(|co| g[co * p..(co + 1) * p].iter().fold(T::zero(), |s, &v| s + v))
        .collect();

    let mut grad_k = vec![T::zero(); c_out * rows];
    let mut grad_cols = vec![T::zero(); rows * p];
    for r in 0..rows {
        let src = &cols[r * p..(r + 1) * p];
        let dst = &mut grad_cols[r * p..(r + 1) * p];
        for co in 0..c_out {
            let gco = &g[co * p..(co + 1) * p];
            grad_k[co * rows + r] = dot(gco, src);
            let kv = k[co * rows + r];
            if kv != T::zero() {
                axpy(dst, kv, gco);
            }
        }
    }

    let mut grad_in = vec![T::zero(); input.numel()];
    geo.for_each_cell(|r, q, i| grad_in[i] += grad_cols[r * p + q]);
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), grad_in)?,
        kernels: grad_k,
        bias,
    })
}

/// Max pooling. Returns the pooled tensor and, per output cell, the flat
/// index of the winning input element. Ties go to the first element in
/// row-major window order.
pub fn maxpool2d<T: Real>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (c, h, w) = chw(input, "maxpool2d")?;
    if window > h || window > w {
        return Err(Error::Geometry(format!(
            "pool window {window} exceeds spatial extent {h}×{w}"
        )));
    }
    let oh = window_extent(h, window, stride, 0)?;
    let ow = window_extent(w, window, stride, 0)?;
    let x = input.values();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (ch * h + oy * stride) * w + ox * stride;
                for dy in 0..window {
                    let row = (ch * h + oy * stride + dy) * w + ox * stride;
                    for i in row..row + window {
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

pub fn maxpool2d_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.numel() {
        return Err(Error::ShapeMismatch(format!(
            "maxpool2d upstream gradient has {} values for {} pooled cells",
            grad_out.numel(),
            argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let gi = grad.values_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.values()) {
        gi[idx] += g;
    }
    Ok(grad)
}

/// Affine layer: the input (any shape, flattened to `n`) times an `n×m`
/// weight matrix plus bias.
pub fn dense<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let (n, m) = dense_dims(input, weights, bias.len())?;
    let w = weights.values();
    let mut out = bias.to_vec();
    for (i, &xi) in input.values().iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(&w[i * m..(i + 1) * m]) {
            *o += xi * wij;
        }
    }
    debug_assert_eq!(input.numel(), n);
    Tensor::new(vec![m], out)
}

fn dense_dims<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias_len: usize,
) -> Result<(usize, usize)> {
    let (n, m) = match *weights.shape() {
        [n, m] => (n, m),
        ref s => {
            return Err(Error::ShapeMismatch(format!(
                "dense weights must be n×m, got {s:?}"
            )))
        }
    };
    if input.numel() != n {
        return Err(Error::ShapeMismatch(format!(
            "dense expects {n} inputs, got {}",
            input.numel()
        )));
    }
    if bias_len != m {
        return Err(Error::ShapeMismatch(format!(
            "dense bias has {bias_len} entries for {m} outputs"
        )));
    }
    Ok((n, m))
}

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

pub fn dense_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, m) = dense_dims(input, weights, grad_out.numel())?;
    let w = weights.values();
    let g = grad_out.values();
    let mut grad_w = vec![T::zero(); n * m];
    let mut grad_in = vec![T::zero(); n];
    for (i, &xi) in input.values().iter().enumerate() {
        let row = &w[i * m..(i + 1) * m];
        grad_in[i] = dot(row, g);
        if xi != T::zero() {
            for (d, &gv) in grad_w[i * m..(i + 1) * m].iter_mut().zip(g) {
                *d = xi * gv;
            }
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(input.shape().to_vec(), grad_in)?,
        weights: grad_w,
        bias: g.to_vec(),
    })
}

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    out.clear_grad();
    for v in out.values_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
    out
}

/// Gradient passes only where the input was strictly positive.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.numel() != grad_out.numel() {
        return Err(Error::ShapeMismatch("relu gradient length".into()));
    }
    let values = input
        .values()
        .iter()
        .zip(grad_out.values())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), values)
}

pub fn check_rate(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidRate(p))
    }
}

/// Inverted dropout. In train mode returns the per-element scale mask
/// (`0` or `1/(1-p)`) used, for the backward pass.
pub fn dropout<T: Real>(
    input: &Tensor<T>,
    p: f64,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    check_rate(p)?;
    let mut out = input.clone();
    out.clear_grad();
    if mode == Mode::Eval || p == 0.0 {
        return Ok((out, None));
    }
    let keep = T::of(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..input.numel())
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    for (v, &m) in out.values_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward<T: Real>(mask: Option<&[T]>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    if let Some(mask) = mask {
        for (v, &m) in g.values_mut().iter_mut().zip(mask) {
            *v *= m;
        }
    }
    g
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Vector-Jacobian product of softmax: `p ⊙ (g − ⟨g, p⟩)`.
pub fn softmax_backward<T: Real>(probs: &[T], grad_out: &[T]) -> Vec<T> {
    let dot: T = probs.iter().zip(grad_out).map(|(&p, &g)| p * g).sum();
    probs
        .iter()
        .zip(grad_out)
        .map(|(&p, &g)| p * (g - dot))
        .collect()
}

pub fn cross_entropy<T: Real>(probs: &[T], label: usize) -> Result<T> {
    let p = *probs.get(label).ok_or(Error::LabelOutOfRange {
        label,
        classes: probs.len(),
    })?;
    Ok(-(p + T::of(LOG_FLOOR)).ln())
}

/// Gradient of [`cross_entropy`] with respect to the probabilities.
pub fn cross_entropy_grad<T: Real>(probs: &[T], label: usize) -> Result<Vec<T>> {
    let p = *probs.get(label).ok_or(Error::LabelOutOfRange {
        label,
        classes: probs.len(),
    })?;
    let mut g = vec![T::zero(); probs.len()];
    g[label] = -(p + T::of(LOG_FLOOR)).recip();
    Ok(g)
}
