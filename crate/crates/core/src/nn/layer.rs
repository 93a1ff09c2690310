use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::NnError;

/// SELU scale constant.
pub const SELU_SCALE: f64 = 1.050_700_987_355_480_5;
/// SELU alpha constant.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// Initial slope of every PReLU unit.
pub const PRELU_INIT: f64 = 0.25;

/// Pointwise nonlinearity applied after the affine map of a [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Identity,
    /// Parametric ReLU with one learned negative slope per output unit.
    PRelu { alpha: Array1<f64> },
    Selu,
    /// Row-wise softmax; only valid on the last layer of an [`super::Mlp`].
    Softmax,
}

/// Activation family without parameters, used when constructing layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Identity,
    PRelu,
    Selu,
    Softmax,
}

impl Activation {
    pub fn kind(&self) -> ActivationKind {
        match self {
            Activation::Identity => ActivationKind::Identity,
            Activation::PRelu { .. } => ActivationKind::PRelu,
            Activation::Selu => ActivationKind::Selu,
            Activation::Softmax => ActivationKind::Softmax,
        }
    }

    fn apply(&self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => pre.clone(),
            Activation::PRelu { alpha } => {
                let mut out = pre.clone();
                for mut row in out.rows_mut() {
                    Zip::from(&mut row).and(alpha).for_each(|z, &a| {
                        if *z <= 0.0 {
                            *z *= a;
                        }
                    });
                }
                out
            }
            Activation::Selu => pre.mapv(|z| {
                if z > 0.0 {
                    SELU_SCALE * z
                } else {
                    SELU_SCALE * SELU_ALPHA * (z.exp() - 1.0)
                }
            }),
            Activation::Softmax => softmax_rows(pre.view()),
        }
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Fully connected layer `y = act(x·Wᵀ + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out × in]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        weights: Array2<f64>,
        bias: Array1<f64>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        let out = weights.nrows();
        if bias.len() != out {
            return Err(NnError::shape("dense bias", out, bias.len()));
        }
        if let Activation::PRelu { alpha } = &activation {
            if alpha.len() != out {
                return Err(NnError::shape("prelu alpha", out, alpha.len()));
            }
        }
        if weights.ncols() == 0 || out == 0 {
            return Err(NnError::EmptyLayer);
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// He-style uniform fan-in initialization; zero bias, PReLU slopes at 0.25.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        kind: ActivationKind,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if input_dim == 0 || output_dim == 0 {
            return Err(NnError::EmptyLayer);
        }
        let limit = (6.0 / input_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bound");
        let weights = Array2::from_shape_simple_fn((output_dim, input_dim), || dist.sample(rng));
        let activation = match kind {
            ActivationKind::Identity => Activation::Identity,
            ActivationKind::PRelu => Activation::PRelu {
                alpha: Array1::from_elem(output_dim, PRELU_INIT),
            },
            ActivationKind::Selu => Activation::Selu,
            ActivationKind::Softmax => Activation::Softmax,
        };
        Self::new(weights, Array1::zeros(output_dim), activation)
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        let alpha = match &self.activation {
            Activation::PRelu { alpha } => alpha.len(),
            _ => 0,
        };
        self.weights.len() + self.bias.len() + alpha
    }

    pub(crate) fn pre_activation(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weights.t());
        z += &self.bias.view().insert_axis(Axis(0));
        z
    }

    pub(crate) fn activate(&self, pre: &Array2<f64>) -> Array2<f64> {
        self.activation.apply(pre)
    }

    /// Gradient w.r.t. the pre-activation plus the PReLU slope gradient (if any),
    /// given the gradient w.r.t. this layer's output.
    pub(crate) fn activation_backward(
        &self,
        pre: &Array2<f64>,
        out: &Array2<f64>,
        grad_out: ArrayView2<f64>,
    ) -> (Array2<f64>, Option<Array1<f64>>) {
        match &self.activation {
            Activation::Identity => (grad_out.to_owned(), None),
            Activation::PRelu { alpha } => {
                let mut dz = grad_out.to_owned();
                let mut dalpha = Array1::<f64>::zeros(alpha.len());
                for (mut drow, zrow) in dz.rows_mut().into_iter().zip(pre.rows()) {
                    for j in 0..alpha.len() {
                        let z = zrow[j];
                        if z <= 0.0 {
                            dalpha[j] += drow[j] * z;
                            drow[j] *= alpha[j];
                        }
                    }
                }
                (dz, Some(dalpha))
            }
            Activation::Selu => {
                let mut dz = grad_out.to_owned();
                Zip::from(&mut dz).and(pre).for_each(|g, &z| {
                    *g *= if z > 0.0 {
                        SELU_SCALE
                    } else {
                        SELU_SCALE * SELU_ALPHA * z.exp()
                    };
                });
                (dz, None)
            }
            Activation::Softmax => {
                // dz = p ⊙ (g − ⟨g, p⟩)
                let mut dz = grad_out.to_owned();
                for (mut grow, prow) in dz.rows_mut().into_iter().zip(out.rows()) {
                    let inner = grow.dot(&prow);
                    Zip::from(&mut grow)
                        .and(&prow)
                        .for_each(|g, &p| *g = p * (*g - inner));
                }
                (dz, None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prelu_alpha_one_is_identity_and_zero_is_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pre = Array2::from_shape_simple_fn((7, 5), || rng.random_range(-2.0..2.0));
        let ident = Activation::PRelu {
            alpha: Array1::ones(5),
        };
        assert_eq!(ident.apply(&pre), pre);
        let relu = Activation::PRelu {
            alpha: Array1::zeros(5),
        };
        assert_eq!(relu.apply(&pre), pre.mapv(|v| v.max(0.0)));
    }

    #[test]
    fn softmax_rows_normalized() {
        let logits = array![[1000.0, 999.0, -5.0], [0.0, 0.0, 0.0]];
        let p = softmax_rows(logits.view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn mismatched_bias_rejected() {
        let err = DenseLayer::new(Array2::zeros((3, 2)), Array1::zeros(2), Activation::Identity);
        assert!(matches!(err, Err(NnError::Shape { .. })));
    }

    #[test]
    fn random_init_within_he_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = DenseLayer::random(24, 8, ActivationKind::PRelu, &mut rng).unwrap();
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(layer.weights.iter().all(|w| w.abs() <= limit));
        assert!(layer.bias.iter().all(|&b| b == 0.0));
        match &layer.activation {
            Activation::PRelu { alpha } => assert!(alpha.iter().all(|&a| a == PRELU_INIT)),
            _ => unreachable!(),
        }
    }
}
