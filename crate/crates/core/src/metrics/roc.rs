use serde::{Deserialize, Serialize};

use super::MetricsError;

/// A pair is accepted when its score is `>= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points in order of decreasing threshold. The first point uses an
/// infinite threshold (nothing accepted); the last accepts everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub genuine: usize,
    pub impostor: usize,
}

pub fn roc(scores: &[f64], genuine: &[bool]) -> Result<RocCurve, MetricsError> {
    if scores.len() != genuine.len() {
        return Err(MetricsError::Protocol(format!(
            "{} scores but {} labels",
            scores.len(),
            genuine.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(MetricsError::Protocol(format!("score {i} is NaN")));
    }
    let n_gen = genuine.iter().filter(|&&g| g).count();
    let n_imp = genuine.len() - n_gen;
    if n_gen == 0 || n_imp == 0 {
        return Err(MetricsError::Protocol(
            "ROC needs at least one genuine and one impostor pair".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if genuine[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_imp as f64,
            tpr: tp as f64 / n_gen as f64,
        });
    }
    Ok(RocCurve {
        points,
        genuine: n_gen,
        impostor: n_imp,
    })
}

/// Best TPR among operating points whose FPR does not exceed `target`.
///
/// No interpolation: the answer is always a TPR the system actually achieves
/// at some threshold with FPR `<= target`.
pub fn tpr_at_fpr(curve: &RocCurve, target: f64) -> Result<f64, MetricsError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(MetricsError::Fpr(target));
    }
    Ok(curve
        .points
        .iter()
        .filter(|p| p.fpr <= target)
        .map(|p| p.tpr)
        .fold(0.0, f64::max))
}
