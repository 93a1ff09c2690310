use ndarray::{Array2, ArrayView2};

use super::NnError;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Batch-mean cross-entropy and its gradient with respect to the probabilities.
#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub value: f64,
    /// `∂loss/∂p`, ready to feed into [`super::Mlp::backward`] of a softmax-headed net.
    pub grad: Array2<f64>,
}

/// `loss = −(1/B)·Σ_b Σ_i t_{b,i} · ln max(p_{b,i}, 1e-12)`.
///
/// `probs` are softmax outputs; `targets` rows must be probability
/// distributions (one-hot for classification, uniform for the adversarial loss).
pub fn softmax_cross_entropy(
    probs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<CrossEntropy, NnError> {
    if probs.dim() != targets.dim() {
        return Err(NnError::shape(
            "cross-entropy targets",
            probs.len(),
            targets.len(),
        ));
    }
    let batch = probs.nrows();
    if batch == 0 {
        return Err(NnError::EmptyBatch);
    }
    for (b, row) in targets.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|&t| t < 0.0 || !t.is_finite()) || (sum - 1.0).abs() > 1e-6 {
            return Err(NnError::InvalidTarget(b));
        }
    }
    let scale = 1.0 / batch as f64;
    let mut value = 0.0;
    let mut grad = Array2::zeros(probs.raw_dim());
    for ((p_row, t_row), mut g_row) in probs
        .rows()
        .into_iter()
        .zip(targets.rows())
        .zip(grad.rows_mut())
    {
        for ((&p, &t), g) in p_row.iter().zip(t_row.iter()).zip(g_row.iter_mut()) {
            if t == 0.0 {
                continue;
            }
            let clamped = p.max(PROB_FLOOR);
            value -= t * clamped.ln();
            *g = -scale * t / clamped;
        }
    }
    Ok(CrossEntropy {
        value: value * scale,
        grad,
    })
}

/// One-hot target matrix for `labels` over `classes` categories.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Array2<f64>, NnError> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
        out[[b, label]] = 1.0;
    }
    Ok(out)
}

/// Uniform target matrix `[rows × classes]` filled with `1/classes`.
pub fn uniform_targets(rows: usize, classes: usize) -> Array2<f64> {
    Array2::from_elem((rows, classes), 1.0 / classes as f64)
}
