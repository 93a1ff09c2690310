use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PassError, PassModel};
use crate::nn::Mlp;

/// One logged scalar. Loss names are `L_class`, `L_br`, `L_att:<attr>`,
/// `L_deb:<attr>` and `val_acc:<attr>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub episode: usize,
    pub stage: u8,
    pub iter: usize,
    pub loss_name: String,
    pub value: f64,
    pub member_index: Option<usize>,
    pub val_acc: Option<f64>,
}

/// SHA-256 of every component's parameters, used to prove which parts a stage touched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDigest {
    pub generator: String,
    pub classifier: String,
    /// `members[e][k]` for ensemble `e`, member `k`.
    pub members: Vec<Vec<String>>,
}

pub(crate) fn net_digest(net: &Mlp) -> String {
    let mut h = Sha256::new();
    for p in net.params_to_vec() {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl ModelDigest {
    pub fn of(model: &PassModel) -> Self {
        Self {
            generator: net_digest(model.generator.net()),
            classifier: net_digest(model.classifier.net()),
            members: model
                .ensembles
                .iter()
                .map(|e| e.members.iter().map(|m| net_digest(m.net())).collect())
                .collect(),
        }
    }
}

/// Summary of one stage execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub episode: usize,
    pub stage: u8,
    /// Gradient steps actually taken (stage 4 may stop early).
    pub iterations: usize,
    /// Discriminators were re-drawn at the start of this stage.
    pub reinitialized: bool,
    /// `(ensemble, member)` pairs whose parameters this stage updates.
    pub trained_members: Vec<(usize, usize)>,
    /// Last measured validation accuracy per ensemble (stage 4 only).
    pub val_acc: Vec<f64>,
    pub before: ModelDigest,
    pub after: ModelDigest,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LossRecord>,
    pub stages: Vec<StageRecord>,
}

impl TrainLog {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(
        &mut self,
        episode: usize,
        stage: u8,
        iter: usize,
        loss_name: String,
        value: f64,
        member_index: Option<usize>,
        val_acc: Option<f64>,
    ) {
        self.records.push(LossRecord {
            episode,
            stage,
            iter,
            loss_name,
            value,
            member_index,
            val_acc,
        });
    }

    /// Values of one named series in log order.
    pub fn series(&self, loss_name: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.loss_name == loss_name)
            .map(|r| r.value)
            .collect()
    }

    /// CSV with columns `episode,stage,iter,loss_name,value,member_index,val_acc`.
    pub fn to_csv(&self) -> Result<String, PassError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)
                .map_err(|e| PassError::Checkpoint(format!("train log: {e}")))?;
        }
        if self.records.is_empty() {
            w.write_record([
                "episode",
                "stage",
                "iter",
                "loss_name",
                "value",
                "member_index",
                "val_acc",
            ])
            .map_err(|e| PassError::Checkpoint(format!("train log: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| PassError::Checkpoint(format!("train log: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), PassError> {
        std::fs::write(path, self.to_csv()?).map_err(|source| PassError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
