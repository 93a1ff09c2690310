//! Adversarial attribute suppression in descriptor space.
//!
//! A [`Generator`] maps frozen face descriptors to a new space. An
//! [`IdentityClassifier`] keeps that space discriminative while one or more
//! [`Ensemble`]s of [`Discriminator`]s try to recover a protected attribute from
//! it. The generator is pushed towards the output on which the most confident
//! discriminator is maximally unsure (uniform over categories).
//!
//! [`train_pass`] runs the single-attribute schedule, [`train_multipass`] the
//! two-attribute one. Both are deterministic given [`PassConfig::seed`].

mod checkpoint;
mod config;
mod log;
mod loss;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{AdversaryConfig, PassConfig, PROFILES};
pub use log::{LossRecord, ModelDigest, StageRecord, TrainLog};
pub use loss::{
    loss_adv_member, loss_att, loss_br, loss_class, loss_deb, member_att_loss, AttLoss, BrLoss,
    ClassLoss, DebLoss, MemberLoss,
};
pub use train::{train, train_multipass, train_pass};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, DescriptorSet};
use crate::nn::{Activation, ActivationKind, Mlp, NnError};

#[derive(Debug, Error)]
pub enum PassError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("config field {field}: {message}")]
    Config { field: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("input dimension {found} does not match the generator's {expected}")]
    InputDim { expected: usize, found: usize },
}

impl PassError {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        PassError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Which ensemble members keep training in the fourth stage of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// One-at-a-time: member `episode mod K`.
    Oat,
    /// All-at-a-time: every member.
    Aet,
}

impl std::str::FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oat" => Ok(Schedule::Oat),
            "aet" => Ok(Schedule::Aet),
            _ => Err(format!("unknown schedule {s:?} (expected oat or aet)")),
        }
    }
}

/// Member indices trained in the fourth stage of `episode`.
pub fn select_member(schedule: Schedule, episode: usize, k: usize) -> Vec<usize> {
    match schedule {
        Schedule::Oat => vec![episode % k],
        Schedule::Aet => (0..k).collect(),
    }
}

fn check_input(net: &Mlp, x: ArrayView2<f64>) -> Result<(), PassError> {
    if x.ncols() != net.input_dim() {
        return Err(PassError::InputDim {
            expected: net.input_dim(),
            found: x.ncols(),
        });
    }
    Ok(())
}

/// Single dense layer with per-unit PReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    net: Mlp,
}

impl Generator {
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self, PassError> {
        let net = Mlp::random(&[input_dim, output_dim], &[ActivationKind::PRelu], rng)?;
        Ok(Self { net })
    }

    pub fn from_net(net: Mlp) -> Result<Self, PassError> {
        let ok = net.layers().len() == 1
            && matches!(net.layers()[0].activation, Activation::PRelu { .. });
        if !ok {
            return Err(PassError::Checkpoint(
                "generator must be one PReLU layer".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, PassError> {
        check_input(&self.net, x)?;
        Ok(self.net.predict(x)?)
    }
}

/// Softmax regression over identities, keeps the generator output discriminative.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityClassifier {
    net: Mlp,
}

impl IdentityClassifier {
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        identities: usize,
        rng: &mut R,
    ) -> Result<Self, PassError> {
        let net = Mlp::random(&[input_dim, identities], &[ActivationKind::Softmax], rng)?;
        Ok(Self { net })
    }

    pub fn from_net(net: Mlp) -> Result<Self, PassError> {
        let ok = net.layers().len() == 1 && net.layers()[0].activation == Activation::Softmax;
        if !ok {
            return Err(PassError::Checkpoint(
                "classifier must be one softmax layer".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn classes(&self) -> usize {
        self.net.output_dim()
    }
}

/// Attribute classifier: two SELU hidden layers and a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    net: Mlp,
}

impl Discriminator {
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: [usize; 2],
        categories: usize,
        rng: &mut R,
    ) -> Result<Self, PassError> {
        let net = Mlp::random(
            &[input_dim, hidden[0], hidden[1], categories],
            &[
                ActivationKind::Selu,
                ActivationKind::Selu,
                ActivationKind::Softmax,
            ],
            rng,
        )?;
        Ok(Self { net })
    }

    pub fn from_net(net: Mlp) -> Result<Self, PassError> {
        let kinds: Vec<ActivationKind> = net.layers().iter().map(|l| l.activation.kind()).collect();
        if kinds
            != [
                ActivationKind::Selu,
                ActivationKind::Selu,
                ActivationKind::Softmax,
            ]
        {
            return Err(PassError::Checkpoint(
                "discriminator must be SELU, SELU, softmax".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn categories(&self) -> usize {
        self.net.output_dim()
    }

    /// Arg-max category per row (lowest index on ties).
    pub fn predict(&self, f_out: ArrayView2<f64>) -> Result<Vec<usize>, PassError> {
        check_input(&self.net, f_out)?;
        let p = self.net.predict(f_out)?;
        Ok(p.rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    pub fn accuracy(&self, f_out: ArrayView2<f64>, labels: &[usize]) -> Result<f64, PassError> {
        let pred = self.predict(f_out)?;
        if pred.len() != labels.len() {
            return Err(NnError::shape("accuracy labels", pred.len(), labels.len()).into());
        }
        if pred.is_empty() {
            return Ok(0.0);
        }
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / pred.len() as f64)
    }
}

/// K discriminators for one protected attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub attribute: String,
    /// Weight of this ensemble's debiasing term in the generator loss.
    pub lambda: f64,
    pub members: Vec<Discriminator>,
}

impl Ensemble {
    pub fn random<R: Rng + ?Sized>(
        attribute: impl Into<String>,
        lambda: f64,
        k: usize,
        input_dim: usize,
        hidden: [usize; 2],
        categories: usize,
        rng: &mut R,
    ) -> Result<Self, PassError> {
        let members = (0..k)
            .map(|_| Discriminator::random(input_dim, hidden, categories, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            attribute: attribute.into(),
            lambda,
            members,
        })
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn categories(&self) -> usize {
        self.members.first().map_or(0, Discriminator::categories)
    }

    /// Fresh random weights for every member, same shapes.
    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), PassError> {
        for m in &mut self.members {
            let layers = m.net.layers();
            let hidden = [layers[0].output_dim(), layers[1].output_dim()];
            *m = Discriminator::random(layers[0].input_dim(), hidden, m.categories(), rng)?;
        }
        Ok(())
    }
}

/// Everything a training run produces: generator, identity head and the ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct PassModel {
    pub generator: Generator,
    pub classifier: IdentityClassifier,
    pub ensembles: Vec<Ensemble>,
}

impl PassModel {
    /// Applies the generator to every row; labels are carried over.
    pub fn transform(&self, set: &DescriptorSet) -> Result<DescriptorSet, PassError> {
        let out = self.generator.transform(set.features_f64().view())?;
        Ok(set.with_features(out.mapv(|v| v as f32))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oat_cycles_members() {
        let seq: Vec<usize> = (0..6)
            .flat_map(|i| select_member(Schedule::Oat, i, 3))
            .collect();
        assert_eq!(seq, vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(select_member(Schedule::Aet, 4, 3), vec![0, 1, 2]);
    }

    #[test]
    fn shapes_follow_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Generator::random(16, 8, &mut rng).unwrap();
        assert_eq!((g.input_dim(), g.output_dim()), (16, 8));
        let e = Ensemble::random("g", 1.0, 3, 8, [5, 4], 2, &mut rng).unwrap();
        assert_eq!((e.k(), e.categories()), (3, 2));
        let x = Array2::zeros((2, 15));
        assert!(matches!(
            g.transform(x.view()),
            Err(PassError::InputDim {
                expected: 16,
                found: 15
            })
        ));
    }

    #[test]
    fn reinitialize_changes_weights_not_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut e = Ensemble::random("g", 1.0, 2, 8, [5, 4], 3, &mut rng).unwrap();
        let before = e.clone();
        e.reinitialize(&mut rng).unwrap();
        assert_ne!(e, before);
        for (a, b) in e.members.iter().zip(&before.members) {
            assert_eq!(a.net().param_count(), b.net().param_count());
        }
    }
}
