//! Dense network kernels with hand-derived backward passes.
//!
//! Everything here works in `f64`. A network is an ordered list of
//! [`DenseLayer`]s; [`Mlp::forward`] keeps a [`ForwardCache`] that
//! [`Mlp::backward`] consumes to produce exact parameter and input gradients.
//! Losses supply the gradient at the network output, already scaled by `1/B`
//! for batch means, and the backward pass sums over rows.

mod layer;
mod loss;
mod mlp;
mod optim;

pub use layer::{
    softmax_rows, Activation, ActivationKind, DenseLayer, PRELU_INIT, SELU_ALPHA, SELU_SCALE,
};
pub use loss::{one_hot, softmax_cross_entropy, uniform_targets, CrossEntropy, PROB_FLOOR};
pub use mlp::{Backward, ForwardCache, Gradients, LayerGradients, Mlp};
pub use optim::{sgd_step, SgdOptimizer};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("layers need at least one input and one output unit")]
    EmptyLayer,
    #[error("batch must contain at least one row")]
    EmptyBatch,
    #[error("softmax activation on inner layer {0}; only the final layer may be softmax")]
    InnerSoftmax(usize),
    #[error("target row {0} is not a probability distribution")]
    InvalidTarget(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
}

impl NnError {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, found: usize) -> Self {
        NnError::Shape {
            context: context.into(),
            expected,
            found,
        }
    }
}
