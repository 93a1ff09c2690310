use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::DescriptorSet;
use crate::nn::{one_hot, sgd_step, softmax_cross_entropy, ActivationKind, Mlp};

/// Training budget and architecture of the leakage probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: [usize; 2],
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Standardize features with train-split mean and deviation before training.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: [128, 64],
            iterations: 5000,
            learning_rate: 1e-3,
            batch_size: 256,
            standardize: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub attribute: String,
    pub train_size: usize,
    pub test_size: usize,
    /// Raw held-out accuracy.
    pub accuracy: f64,
    /// Held-out accuracy per category; `None` for categories absent from the test split.
    pub per_class: Vec<Option<f64>>,
    /// e.g. `64-128-64-2 selu/selu/softmax`.
    pub architecture: String,
    pub config: ProbeConfig,
}

/// Trains a fresh MLP on `train` features to predict `attribute` and reports
/// its accuracy on `test`.
pub fn leakage_probe(
    train: &DescriptorSet,
    test: &DescriptorSet,
    attribute: &str,
    config: &ProbeConfig,
) -> Result<ProbeReport, MetricsError> {
    if config.iterations == 0 || config.batch_size == 0 {
        return Err(MetricsError::Protocol(
            "probe iterations and batch size must be >= 1".into(),
        ));
    }
    if train.dim() != test.dim() {
        return Err(MetricsError::Protocol(format!(
            "train dim {} differs from test dim {}",
            train.dim(),
            test.dim()
        )));
    }
    let train_col = train.attribute(attribute)?;
    let test_col = test.attribute(attribute)?;
    let categories = train_col.categories.max(test_col.categories) as usize;
    let mut present = vec![false; categories];
    for &l in &train_col.labels {
        present[l as usize] = true;
    }
    let absent: Vec<usize> = (0..categories).filter(|&c| !present[c]).collect();
    if !absent.is_empty() {
        return Err(MetricsError::Protocol(format!(
            "attribute {attribute:?}: categories {absent:?} absent from the probe training split"
        )));
    }

    let mut x_train = train.features_f64();
    let mut x_test = test.features_f64();
    if config.standardize {
        let mean = x_train.mean_axis(Axis(0)).expect("non-empty");
        let std: Array1<f64> = x_train
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        for x in [&mut x_train, &mut x_test] {
            *x -= &mean;
            *x /= &std;
        }
    }
    let y_train = train_col.labels_usize();
    let y_test = test_col.labels_usize();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let widths = [train.dim(), config.hidden[0], config.hidden[1], categories];
    let mut net = Mlp::random(
        &widths,
        &[
            ActivationKind::Selu,
            ActivationKind::Selu,
            ActivationKind::Softmax,
        ],
        &mut rng,
    )?;
    let n = x_train.nrows();
    for _ in 0..config.iterations {
        let rows: Vec<usize> = (0..config.batch_size)
            .map(|_| rng.random_range(0..n))
            .collect();
        let x = x_train.select(Axis(0), &rows);
        let y: Vec<usize> = rows.iter().map(|&r| y_train[r]).collect();
        let cache = net.forward(x.view())?;
        let targets = one_hot(&y, categories)?;
        let ce = softmax_cross_entropy(cache.output().view(), targets.view())?;
        let back = net.backward(&cache, ce.grad.view())?;
        sgd_step(&mut net, &back.grads, config.learning_rate)?;
    }

    let probs: Array2<f64> = net.predict(x_test.view())?;
    let mut hits = vec![0usize; categories];
    let mut totals = vec![0usize; categories];
    for (row, &label) in probs.rows().into_iter().zip(&y_test) {
        let mut best = 0;
        for (c, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = c;
            }
        }
        totals[label] += 1;
        if best == label {
            hits[label] += 1;
        }
    }
    let accuracy = hits.iter().sum::<usize>() as f64 / y_test.len() as f64;
    let per_class = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect();
    Ok(ProbeReport {
        attribute: attribute.to_string(),
        train_size: train.len(),
        test_size: test.len(),
        accuracy,
        per_class,
        architecture: format!(
            "{}-{}-{}-{} selu/selu/softmax",
            widths[0], widths[1], widths[2], widths[3]
        ),
        config: config.clone(),
    })
}
