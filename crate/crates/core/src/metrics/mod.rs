//! Verification scoring, ROC operating points, demographic bias measures and
//! the attribute-leakage probe.

mod pairs;
mod probe;
mod report;
mod roc;

pub use pairs::{cosine_scores, verification_pairs, Pair, PairList, PairProtocol};
pub use probe::{leakage_probe, ProbeConfig, ProbeReport};
pub use report::{evaluate, BiasReport, BpcEntry, BpcReport, EvalOptions, FprEntry};
pub use roc::{roc, tpr_at_fpr, RocCurve, RocPoint};

use thiserror::Error;

use crate::data::DataError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("row {0} has zero norm and cannot be scored")]
    ZeroNorm(usize),
    #[error("pair {pair} references row {row}, but only {rows} rows exist")]
    PairIndex { pair: usize, row: usize, rows: usize },
    #[error("target FPR must lie in (0, 1], got {0}")]
    Fpr(f64),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Absolute gap between two group TPRs at the same FPR.
pub fn bias(tpr_g1: f64, tpr_g2: f64) -> f64 {
    (tpr_g1 - tpr_g2).abs()
}

/// Bias performance coefficient: relative bias reduction minus relative TPR loss.
///
/// `None` when the baseline bias or baseline TPR is zero, where the ratio is undefined.
pub fn bpc(bias_base: f64, bias_deb: f64, tpr_base: f64, tpr_deb: f64) -> Option<f64> {
    if bias_base == 0.0 || tpr_base == 0.0 {
        return None;
    }
    Some((bias_base - bias_deb) / bias_base - (tpr_base - tpr_deb) / tpr_base)
}

/// Population standard deviation (divides by `n`) of per-group TPRs.
pub fn group_tpr_std(tprs: &[f64]) -> Result<f64, MetricsError> {
    if tprs.len() < 2 {
        return Err(MetricsError::Protocol(format!(
            "group TPR spread needs at least 2 groups, got {}",
            tprs.len()
        )));
    }
    // Shifted by the first value so identical TPRs give exactly zero.
    let n = tprs.len() as f64;
    let shift = tprs[0];
    let mean = tprs.iter().map(|t| t - shift).sum::<f64>() / n;
    let var = tprs.iter().map(|t| (t - shift - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt())
}
