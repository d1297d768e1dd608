//! SGD, RMSprop and Adam.
//!
//! RMSprop and Adam add `ε` to `sqrt(v)`, not inside the square root.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidParameter(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// RMSprop decay.
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate: 1e-2,
            ..Self::adam()
        }
    }

    pub fn rmsprop() -> Self {
        Self {
            kind: OptimizerKind::RmsProp,
            ..Self::adam()
        }
    }

    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            rho: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Default hyperparameters for `kind`.
    pub fn defaults(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(),
            OptimizerKind::RmsProp => Self::rmsprop(),
            OptimizerKind::Adam => Self::adam(),
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {x} must lie in (0, 1)")))
            }
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter("epsilon must be non-negative".into()));
        }
        match self.kind {
            OptimizerKind::Sgd => Ok(()),
            OptimizerKind::RmsProp => open_unit("rho", self.rho),
            OptimizerKind::Adam => {
                open_unit("beta1", self.beta1)?;
                open_unit("beta2", self.beta2)
            }
        }
    }
}

/// Per-parameter accumulators plus the step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState<T = f32> {
    config: OptimizerConfig,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            steps: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self) -> &[Vec<T>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.second_moment
    }

    /// Updates each tensor from its gradient slot.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        let mut values = Vec::with_capacity(params.len());
        let mut grads = Vec::with_capacity(params.len());
        for p in params.iter_mut() {
            let (v, g) = p.values_and_grad_mut();
            let g = g.ok_or_else(|| {
                Error::ShapeMismatch("parameter has no gradient to step on".into())
            })?;
            values.push(v);
            grads.push(g);
        }
        self.step_slices(&mut values, &grads)
    }

    /// Updates raw parameter slices with matching gradients.
    pub fn step_slices(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter of {} values, gradient of {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        self.ensure_accumulators(params)?;
        self.steps += 1;

        let c = self.config;
        let lr = T::of(c.learning_rate);
        let eps = T::of(c.epsilon);
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, &gx) in p.iter_mut().zip(g.iter()) {
                        *x -= lr * gx;
                    }
                }
            }
            OptimizerKind::RmsProp => {
                let rho = T::of(c.rho);
                let one_minus = T::of(1.0 - c.rho);
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.second_moment) {
                    for ((x, &gx), vx) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                        *vx = rho * *vx + one_minus * gx * gx;
                        *x -= lr * gx / (vx.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
                let (om1, om2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
                let t = self.steps as i32;
                let corr1 = T::of(1.0 - c.beta1.powi(t));
                let corr2 = T::of(1.0 - c.beta2.powi(t));
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    for (((x, &gx), mx), vx) in
                        p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mx = b1 * *mx + om1 * gx;
                        *vx = b2 * *vx + om2 * gx * gx;
                        let m_hat = *mx / corr1;
                        let v_hat = *vx / corr2;
                        *x -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    fn ensure_accumulators(&mut self, params: &[&mut [T]]) -> Result<()> {
        let needs_first = self.config.kind == OptimizerKind::Adam;
        let needs_second = self.config.kind != OptimizerKind::Sgd;
        if self.steps == 0 {
            let zeros = |p: &&mut [T]| vec![T::zero(); p.len()];
            if needs_first {
                self.first_moment = params.iter().map(zeros).collect();
            }
            if needs_second {
                self.second_moment = params.iter().map(zeros).collect();
            }
            return Ok(());
        }
        let shaped = |acc: &[Vec<T>]| {
            acc.len() == params.len() && acc.iter().zip(params).all(|(a, p)| a.len() == p.len())
        };
        if (needs_first && !shaped(&self.first_moment))
            || (needs_second && !shaped(&self.second_moment))
        {
            return Err(Error::ShapeMismatch(
                "parameter shapes changed between optimizer steps".into(),
            ));
        }
        Ok(())
    }
}
