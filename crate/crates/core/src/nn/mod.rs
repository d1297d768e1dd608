//! Layers, a sequential compute graph, and reverse-mode gradients.

mod graph;
pub mod ops;

pub use graph::{Backward, BatchGradients, ComputeGraph, LayerSpec, Trace};
pub use ops::{
    conv2d, cross_entropy, dense, dropout, maxpool2d, relu, softmax, LOG_FLOOR,
};

/// Train mode enables dropout; eval mode is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}
