use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::layer::{Activation, ActivationKind, DenseLayer};
use super::NnError;

/// A chain of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Intermediate values kept by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input batch, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.activations[0]
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Parameter gradients of a single layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Present only for PReLU layers.
    pub alpha: Option<Array1<f64>>,
}

/// Parameter gradients for a whole [`Mlp`], shape-matched layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

/// Result of [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    /// Gradient with respect to the network input, `[B × in]`.
    pub input_grad: Array2<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| LayerGradients {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
                alpha: match &l.activation {
                    Activation::PRelu { alpha } => Some(Array1::zeros(alpha.len())),
                    _ => None,
                },
            })
            .collect();
        Self { layers }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<(), NnError> {
        if self.layers.len() != other.layers.len() {
            return Err(NnError::shape(
                "gradient layer count",
                self.layers.len(),
                other.layers.len(),
            ));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.raw_dim() != b.weights.raw_dim() {
                return Err(NnError::shape(
                    "gradient weights",
                    a.weights.len(),
                    b.weights.len(),
                ));
            }
            a.weights.scaled_add(scale, &b.weights);
            a.bias.scaled_add(scale, &b.bias);
            match (&mut a.alpha, &b.alpha) {
                (Some(x), Some(y)) => x.scaled_add(scale, y),
                (None, None) => {}
                _ => return Err(NnError::shape("gradient alpha", 1, 0)),
            }
        }
        Ok(())
    }

    /// Flatten in the same order as [`Mlp::params_to_vec`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
            if let Some(a) = &l.alpha {
                out.extend(a.iter());
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.to_vec().iter().all(|&g| g == 0.0)
    }
}

impl Mlp {
    /// Validates that layer dimensions chain and that only the final layer is a softmax.
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyLayer);
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(NnError::shape(
                    format!("layer {} input", i + 1),
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        let last = layers.len() - 1;
        if let Some(i) = layers[..last]
            .iter()
            .position(|l| l.activation.kind() == ActivationKind::Softmax)
        {
            return Err(NnError::InnerSoftmax(i));
        }
        Ok(Self { layers })
    }

    /// Builds a randomly initialized network with the given widths and activations.
    /// `widths` includes the input width, so `widths.len() == kinds.len() + 1`.
    pub fn random<R: Rng + ?Sized>(
        widths: &[usize],
        kinds: &[ActivationKind],
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if widths.len() != kinds.len() + 1 {
            return Err(NnError::shape(
                "activation count",
                widths.len().saturating_sub(1),
                kinds.len(),
            ));
        }
        let layers = widths
            .windows(2)
            .zip(kinds)
            .map(|(w, &k)| DenseLayer::random(w[0], w[1], k, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<ForwardCache, NnError> {
        if batch.ncols() != self.input_dim() {
            return Err(NnError::shape(
                "forward input columns",
                self.input_dim(),
                batch.ncols(),
            ));
        }
        if batch.nrows() == 0 {
            return Err(NnError::EmptyBatch);
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(batch.to_owned());
        for layer in &self.layers {
            let z = layer.pre_activation(activations.last().unwrap().view());
            let a = layer.activate(&z);
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    /// Forward pass without retaining the cache.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        if batch.ncols() != self.input_dim() {
            return Err(NnError::shape(
                "forward input columns",
                self.input_dim(),
                batch.ncols(),
            ));
        }
        let mut x = batch.to_owned();
        for layer in &self.layers {
            let z = layer.pre_activation(x.view());
            x = layer.activate(&z);
        }
        Ok(x)
    }

    /// Back-propagates `grad_output` (the gradient of a scalar loss w.r.t. the
    /// network output). Gradients are summed over the batch, so a batch-mean loss
    /// must carry its `1/B` factor in `grad_output`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
    ) -> Result<Backward, NnError> {
        if cache.pre_activations.len() != self.layers.len() {
            return Err(NnError::shape(
                "cache layer count",
                self.layers.len(),
                cache.pre_activations.len(),
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &cache.pre_activations[l];
            if z.ncols() != layer.output_dim() || cache.activations[l].ncols() != layer.input_dim()
            {
                return Err(NnError::shape(
                    format!("cache layer {l}"),
                    layer.output_dim(),
                    z.ncols(),
                ));
            }
        }
        let out = cache.output();
        if grad_output.dim() != out.dim() {
            return Err(NnError::shape(
                "output gradient",
                out.len(),
                grad_output.len(),
            ));
        }

        let mut grad = grad_output.to_owned();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (dz, alpha) = layer.activation_backward(
                &cache.pre_activations[l],
                &cache.activations[l + 1],
                grad.view(),
            );
            let input = &cache.activations[l];
            let weights = dz.t().dot(input);
            let bias = dz.sum_axis(Axis(0));
            grad = dz.dot(&layer.weights);
            layers.push(LayerGradients {
                weights,
                bias,
                alpha,
            });
        }
        layers.reverse();
        Ok(Backward {
            grads: Gradients { layers },
            input_grad: grad,
        })
    }

    /// Flatten all parameters: per layer weights (row-major), bias, then PReLU slopes.
    pub fn params_to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
            if let Activation::PRelu { alpha } = &l.activation {
                out.extend(alpha.iter());
            }
        }
        out
    }

    /// Inverse of [`Mlp::params_to_vec`].
    pub fn set_params_from_slice(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::shape(
                "parameter vector",
                self.param_count(),
                params.len(),
            ));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
            if let Activation::PRelu { alpha } = &mut l.activation {
                alpha.iter_mut().for_each(|a| *a = it.next().unwrap());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer =
            DenseLayer::new(Array2::eye(3), Array1::zeros(3), Activation::Identity).unwrap();
        let net = Mlp::new(vec![layer]).unwrap();
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(net.forward(x.view()).unwrap().output(), &x);
    }

    #[test]
    fn softmax_only_allowed_last() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = Mlp::random(
            &[4, 3, 2],
            &[ActivationKind::Softmax, ActivationKind::Identity],
            &mut rng,
        );
        assert!(matches!(err, Err(NnError::InnerSoftmax(0))));
    }

    #[test]
    fn chain_mismatch_rejected() {
        let a = DenseLayer::new(Array2::zeros((3, 2)), Array1::zeros(3), Activation::Identity)
            .unwrap();
        let b = DenseLayer::new(Array2::zeros((1, 4)), Array1::zeros(1), Activation::Identity)
            .unwrap();
        assert!(matches!(Mlp::new(vec![a, b]), Err(NnError::Shape { .. })));
    }

    #[test]
    fn forward_rejects_bad_columns_and_empty_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::random(&[4, 2], &[ActivationKind::Selu], &mut rng).unwrap();
        assert!(net.forward(Array2::zeros((2, 3)).view()).is_err());
        assert!(matches!(
            net.forward(Array2::zeros((0, 4)).view()),
            Err(NnError::EmptyBatch)
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::random(
            &[5, 6, 4, 3],
            &[
                ActivationKind::PRelu,
                ActivationKind::Selu,
                ActivationKind::Softmax,
            ],
            &mut rng,
        )
        .unwrap();
        let x = Array2::from_shape_simple_fn((4, 5), || rng.random_range(-1.0..1.0));
        let cache = net.forward(x.view()).unwrap();
        let back = net.backward(&cache, Array2::zeros((4, 3)).view()).unwrap();
        assert!(back.grads.is_zero());
        assert!(back.input_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Mlp::random(&[3, 2], &[ActivationKind::Identity], &mut rng).unwrap();
        let b = Mlp::random(&[3, 4, 2], &[ActivationKind::Selu, ActivationKind::Identity], &mut rng)
            .unwrap();
        let cache = a.forward(Array2::zeros((1, 3)).view()).unwrap();
        assert!(b.backward(&cache, Array2::zeros((1, 2)).view()).is_err());
    }

    #[test]
    fn param_vector_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::random(
            &[3, 4, 2],
            &[ActivationKind::PRelu, ActivationKind::Softmax],
            &mut rng,
        )
        .unwrap();
        let v = net.params_to_vec();
        assert_eq!(v.len(), 3 * 4 + 4 + 4 + 4 * 2 + 2);
        let mut other = net.clone();
        other.set_params_from_slice(&vec![0.0; v.len()]).unwrap();
        other.set_params_from_slice(&v).unwrap();
        assert_eq!(other, net);
    }
}
