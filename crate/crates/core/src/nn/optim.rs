use ndarray::Zip;

use super::layer::Activation;
use super::{Gradients, Mlp, NnError};

/// Plain gradient descent: `p ← p − lr·g` for every parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdOptimizer {
    learning_rate: f64,
}

impl SgdOptimizer {
    pub fn new(learning_rate: f64) -> Result<Self, NnError> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(NnError::LearningRate(learning_rate));
        }
        Ok(Self { learning_rate })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step(&self, model: &mut Mlp, grads: &Gradients) -> Result<(), NnError> {
        sgd_step(model, grads, self.learning_rate)
    }
}

/// Applies one descent step with an arbitrary (possibly zero) rate.
pub fn sgd_step(model: &mut Mlp, grads: &Gradients, lr: f64) -> Result<(), NnError> {
    if grads.layers.len() != model.layers().len() {
        return Err(NnError::shape(
            "gradient layer count",
            model.layers().len(),
            grads.layers.len(),
        ));
    }
    for (layer, g) in model.layers().iter().zip(&grads.layers) {
        if layer.weights.raw_dim() != g.weights.raw_dim() || layer.bias.len() != g.bias.len() {
            return Err(NnError::shape(
                "gradient shape",
                layer.weights.len(),
                g.weights.len(),
            ));
        }
        let has_alpha = matches!(layer.activation, Activation::PRelu { .. });
        if has_alpha != g.alpha.is_some() {
            return Err(NnError::shape("gradient alpha", has_alpha as usize, 0));
        }
    }
    for (layer, g) in model.layers_mut().iter_mut().zip(&grads.layers) {
        Zip::from(&mut layer.weights)
            .and(&g.weights)
            .for_each(|p, &d| *p -= lr * d);
        Zip::from(&mut layer.bias)
            .and(&g.bias)
            .for_each(|p, &d| *p -= lr * d);
        if let (Activation::PRelu { alpha }, Some(ga)) = (&mut layer.activation, &g.alpha) {
            Zip::from(alpha).and(ga).for_each(|p, &d| *p -= lr * d);
        }
    }
    Ok(())
}
