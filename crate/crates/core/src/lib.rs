//! Core library for the white-blood-cell classification lab.
//!
//! The crate is split along the pipeline:
//!
//! * [`tensor`] and [`nn`]: a small CPU tensor engine with the layers needed by
//!   the ensemble members and reverse-mode gradients for them.
//! * [`optim`]: SGD, RMSprop and Adam.
//! * [`data`]: CSV ingestion, stratified splitting, pixel standardization and
//!   affine augmentation with class balancing.
//! * [`ensemble`]: the three CNN members, their training loop and the
//!   probability combiners.
//! * [`metrics`]: confusion matrices, per-class tables, ROC curves and AUC.
//! * [`explain`]: LIME over superpixels with a weighted ridge surrogate.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
