use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{bias, bpc, cosine_scores, group_tpr_std, roc, tpr_at_fpr, MetricsError, PairList, RocCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub fprs: Vec<f64>,
    /// The two groups whose TPR gap is reported as bias. Defaults to the two
    /// groups present when there are exactly two.
    pub bias_groups: Option<[String; 2]>,
    /// Keep the full overall ROC curve in the report.
    pub include_roc: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            fprs: vec![1e-3, 1e-2, 1e-1],
            bias_groups: None,
            include_roc: false,
        }
    }
}

/// Verification results at one target FPR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprEntry {
    pub fpr: f64,
    pub tpr_overall: f64,
    pub group_tpr: BTreeMap<String, f64>,
    pub bias: Option<f64>,
    /// Population deviation of group TPRs, reported for three or more groups.
    pub std: Option<f64>,
}

impl FprEntry {
    /// Derives bias and spread from already known group TPRs.
    pub fn from_group_tprs(
        fpr: f64,
        tpr_overall: f64,
        group_tpr: BTreeMap<String, f64>,
        bias_groups: Option<&[String; 2]>,
    ) -> Result<Self, MetricsError> {
        let bias = match bias_groups {
            Some([a, b]) => {
                let absent: Vec<&str> = [a, b]
                    .into_iter()
                    .filter(|g| !group_tpr.contains_key(*g))
                    .map(String::as_str)
                    .collect();
                if !absent.is_empty() {
                    return Err(MetricsError::Protocol(format!(
                        "no pairs for groups [{}]",
                        absent.join(", ")
                    )));
                }
                Some(bias(group_tpr[a], group_tpr[b]))
            }
            None => None,
        };
        let std = if group_tpr.len() >= 3 {
            Some(group_tpr_std(&group_tpr.values().copied().collect::<Vec<_>>())?)
        } else {
            None
        };
        Ok(Self {
            fpr,
            tpr_overall,
            group_tpr,
            bias,
            std,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub pairs: usize,
    pub genuine: usize,
    pub impostor: usize,
    pub groups: Vec<String>,
    pub bias_groups: Option<[String; 2]>,
    pub entries: Vec<FprEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpcEntry {
    pub fpr: f64,
    pub bias_base: f64,
    pub bias_deb: f64,
    pub tpr_base: f64,
    pub tpr_deb: f64,
    /// `None` when the baseline bias or TPR is zero.
    pub bpc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpcReport {
    pub entries: Vec<BpcEntry>,
}

impl BpcReport {
    /// Compares a debiased report against its baseline, FPR by FPR.
    pub fn compare(base: &BiasReport, deb: &BiasReport) -> Result<Self, MetricsError> {
        let mut entries = Vec::with_capacity(deb.entries.len());
        for d in &deb.entries {
            let b = base
                .entries
                .iter()
                .find(|b| b.fpr == d.fpr)
                .ok_or_else(|| {
                    MetricsError::Protocol(format!("baseline has no entry for FPR {}", d.fpr))
                })?;
            let (Some(bias_base), Some(bias_deb)) = (b.bias, d.bias) else {
                return Err(MetricsError::Protocol(format!(
                    "BPC at FPR {} needs bias in both reports",
                    d.fpr
                )));
            };
            entries.push(BpcEntry {
                fpr: d.fpr,
                bias_base,
                bias_deb,
                tpr_base: b.tpr_overall,
                tpr_deb: d.tpr_overall,
                bpc: bpc(bias_base, bias_deb, b.tpr_overall, d.tpr_overall),
            });
        }
        Ok(Self { entries })
    }
}

impl BiasReport {
    /// Flat CSV, one row per `(fpr, metric)`; undefined BPC is written as `undefined`.
    pub fn to_csv(&self, bpc: Option<&BpcReport>) -> String {
        let mut out = String::from("fpr,metric,value\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},tpr_overall,{}", e.fpr, e.tpr_overall);
            for (g, t) in &e.group_tpr {
                let _ = writeln!(out, "{},tpr:{g},{t}", e.fpr);
            }
            if let Some(b) = e.bias {
                let _ = writeln!(out, "{},bias,{b}", e.fpr);
            }
            if let Some(s) = e.std {
                let _ = writeln!(out, "{},std,{s}", e.fpr);
            }
            if let Some(p) = bpc.and_then(|r| r.entries.iter().find(|p| p.fpr == e.fpr)) {
                let value = p.bpc.map_or("undefined".to_string(), |v| v.to_string());
                let _ = writeln!(out, "{},bpc,{value}", e.fpr);
            }
        }
        out
    }
}

/// Scores every pair by cosine similarity and reports overall and per-group
/// TPR at each requested FPR. Each group gets its own ROC over its tagged pairs.
pub fn evaluate(
    features: ArrayView2<f64>,
    pairs: &PairList,
    options: &EvalOptions,
    baseline: Option<&BiasReport>,
) -> Result<(BiasReport, Option<BpcReport>), MetricsError> {
    for &f in &options.fprs {
        if !(f > 0.0 && f <= 1.0) {
            return Err(MetricsError::Fpr(f));
        }
    }
    let scores = cosine_scores(features, pairs)?;
    let flags = pairs.genuine_flags();
    let overall = roc(&scores, &flags)?;
    let groups = pairs.groups();
    if let Some(wanted) = &options.bias_groups {
        let absent: Vec<&str> = wanted
            .iter()
            .filter(|g| !groups.contains(g))
            .map(String::as_str)
            .collect();
        if !absent.is_empty() {
            return Err(MetricsError::Protocol(format!(
                "no pairs for groups [{}]",
                absent.join(", ")
            )));
        }
    }
    let bias_groups = options.bias_groups.clone().or_else(|| match groups.as_slice() {
        [a, b] => Some([a.clone(), b.clone()]),
        _ => None,
    });
    let mut group_curves = BTreeMap::new();
    for g in &groups {
        let (s, f): (Vec<f64>, Vec<bool>) = pairs
            .pairs
            .iter()
            .zip(&scores)
            .filter(|(p, _)| p.group.as_ref() == Some(g))
            .map(|(p, &s)| (s, p.genuine))
            .unzip();
        let curve = roc(&s, &f).map_err(|_| {
            MetricsError::Protocol(format!(
                "group {g} needs both genuine and impostor pairs"
            ))
        })?;
        group_curves.insert(g.clone(), curve);
    }
    let mut entries = Vec::with_capacity(options.fprs.len());
    for &fpr in &options.fprs {
        let mut group_tpr = BTreeMap::new();
        for (g, c) in &group_curves {
            group_tpr.insert(g.clone(), tpr_at_fpr(c, fpr)?);
        }
        entries.push(FprEntry::from_group_tprs(
            fpr,
            tpr_at_fpr(&overall, fpr)?,
            group_tpr,
            bias_groups.as_ref(),
        )?);
    }
    let report = BiasReport {
        pairs: pairs.len(),
        genuine: overall.genuine,
        impostor: overall.impostor,
        groups,
        bias_groups,
        entries,
        roc: options.include_roc.then_some(overall),
    };
    let bpc = baseline
        .map(|base| BpcReport::compare(base, &report))
        .transpose()?;
    Ok((report, bpc))
}
