//! End-to-end runs on synthetic data: generate, split by identity, train,
//! transform, probe for leakage and score a verification protocol.
//!
//! Identities are split 50/25/25 into a training part (used by the trainer),
//! a probe-training part and a probe-test part. Verification pairs are drawn
//! from the two held-out parts, so every number reported here comes from
//! identities the generator never saw.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{generate_synthetic, split, DataError, DescriptorSet, SplitSpec, Stratify, SynthSpec};
use crate::metrics::{
    evaluate, leakage_probe, verification_pairs, BiasReport, BpcReport, EvalOptions,
    MetricsError, PairProtocol, ProbeConfig,
};
use crate::pass::{train, ModelDigest, PassConfig, PassError, PassModel, TrainLog};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pass(#[from] PassError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("sweep: {0}")]
    Sweep(String),
}

/// Everything needed to reproduce one run, apart from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub synth: SynthSpec,
    pub pass: PassConfig,
    pub probe: ProbeConfig,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
    /// Attribute whose categories tag verification pairs, if any.
    pub pair_groups: Option<String>,
    pub fprs: Vec<f64>,
    /// Also probe the untransformed descriptors.
    pub probe_raw: bool,
}

impl ExperimentSpec {
    /// 100 identities × 20 samples in 64 dimensions with one strongly leaked
    /// binary attribute, trained with the desk profile.
    pub fn synthetic_desk() -> Self {
        Self {
            synth: SynthSpec {
                n_identities: 100,
                samples_per_identity: 20,
                dim: 64,
                attributes: vec![crate::data::AttributeSpec::balanced("gender", 2, 0.7)],
                cluster_spread: 0.07,
                seed: 0,
            },
            pass: PassConfig::desk(),
            probe: ProbeConfig {
                iterations: 1500,
                learning_rate: 1e-2,
                batch_size: 128,
                ..ProbeConfig::default()
            },
            genuine_pairs: 2000,
            impostor_pairs: 8000,
            pair_groups: Some("gender".into()),
            fprs: vec![1e-3, 1e-2, 1e-1],
            probe_raw: false,
        }
    }

    /// Same as [`ExperimentSpec::synthetic_desk`] with a second leaked
    /// attribute and the two-adversary desk profile.
    pub fn synthetic_desk_multipass() -> Self {
        let mut s = Self::synthetic_desk();
        s.synth
            .attributes
            .push(crate::data::AttributeSpec::balanced("skintone", 2, 0.7));
        s.pass = PassConfig::desk_multipass();
        s
    }

    /// Copy with every adversary weight set to zero: the matching control run.
    pub fn control(&self) -> Self {
        let mut s = self.clone();
        for a in &mut s.pass.adversaries {
            a.lambda = 0.0;
        }
        s
    }
}

/// The three identity-disjoint parts of one synthetic dataset.
#[derive(Debug, Clone)]
pub struct Parts {
    pub train: DescriptorSet,
    pub probe_train: DescriptorSet,
    pub probe_test: DescriptorSet,
}

impl Parts {
    /// Probe-train and probe-test rows stacked, for verification pairs.
    pub fn held_out(&self) -> Result<DescriptorSet, DataError> {
        stack(&self.probe_train, &self.probe_test)
    }
}

fn stack(a: &DescriptorSet, b: &DescriptorSet) -> Result<DescriptorSet, DataError> {
    let mut features = Array2::<f32>::zeros((a.len() + b.len(), a.dim()));
    features.slice_mut(ndarray::s![..a.len(), ..]).assign(&a.features());
    features.slice_mut(ndarray::s![a.len().., ..]).assign(&b.features());
    let identities = a.identities().iter().chain(b.identities()).copied().collect();
    let attributes = a
        .attributes()
        .iter()
        .zip(b.attributes())
        .map(|(x, y)| {
            crate::data::AttributeColumn::new(
                x.name.clone(),
                x.categories.max(y.categories),
                x.labels.iter().chain(&y.labels).copied().collect(),
            )
        })
        .collect();
    DescriptorSet::new(features, identities, attributes)
}

/// Generates the dataset for `seed` and splits it by identity.
pub fn prepare_parts(spec: &ExperimentSpec, seed: u64) -> Result<Parts, ExperimentError> {
    let mut synth = spec.synth.clone();
    synth.seed = seed;
    let data = generate_synthetic(&synth)?;
    let (train, probe_train, probe_test) = split(
        &data,
        &SplitSpec::new(0.5, 0.25, 0.25, Stratify::Identity, seed.wrapping_add(1)),
    )?;
    Ok(Parts {
        train,
        probe_train,
        probe_test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// SHA-256 of the trained generator parameters.
    pub generator_digest: String,
    /// Held-out probe accuracy on transformed descriptors, per attribute.
    pub probe: BTreeMap<String, f64>,
    /// Same probe on the raw descriptors, when requested.
    pub probe_raw: BTreeMap<String, f64>,
    /// Verification on transformed descriptors.
    pub report: BiasReport,
    /// Same pairs scored on the raw descriptors.
    pub baseline: BiasReport,
    /// Transformed against raw, when both reports carry a bias.
    pub bpc: Option<BpcReport>,
}

impl RunSummary {
    pub fn tpr_at(&self, fpr: f64) -> Option<f64> {
        self.report
            .entries
            .iter()
            .find(|e| e.fpr == fpr)
            .map(|e| e.tpr_overall)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub model: PassModel,
    pub log: TrainLog,
}

/// Probes every trained attribute, training on `probe_train` and testing on `probe_test`.
pub fn probe_all(
    probe_train: &DescriptorSet,
    probe_test: &DescriptorSet,
    attributes: &[String],
    config: &ProbeConfig,
) -> Result<BTreeMap<String, f64>, ExperimentError> {
    let mut out = BTreeMap::new();
    for a in attributes {
        let r = leakage_probe(probe_train, probe_test, a, config)?;
        out.insert(a.clone(), r.accuracy);
    }
    Ok(out)
}

/// One complete run for `seed`.
pub fn run(spec: &ExperimentSpec, seed: u64) -> Result<RunOutput, ExperimentError> {
    let parts = prepare_parts(spec, seed)?;
    let mut cfg = spec.pass.clone();
    cfg.seed = seed;
    let (model, log) = train(&parts.train, &cfg)?;
    let attributes: Vec<String> = cfg.adversaries.iter().map(|a| a.attribute.clone()).collect();
    let mut probe_cfg = spec.probe.clone();
    probe_cfg.seed = seed;

    let probe_raw = if spec.probe_raw {
        probe_all(&parts.probe_train, &parts.probe_test, &attributes, &probe_cfg)?
    } else {
        BTreeMap::new()
    };
    let probe_train = model.transform(&parts.probe_train)?;
    let probe_test = model.transform(&parts.probe_test)?;
    let probe = probe_all(&probe_train, &probe_test, &attributes, &probe_cfg)?;

    let held = parts.held_out()?;
    let pairs = verification_pairs(
        &held,
        &PairProtocol {
            genuine: spec.genuine_pairs,
            impostor: spec.impostor_pairs,
            group_attribute: spec.pair_groups.clone(),
            seed,
        },
    )?;
    let options = EvalOptions {
        fprs: spec.fprs.clone(),
        ..EvalOptions::default()
    };
    let raw = held.features_f64();
    let (baseline, _) = evaluate(raw.view(), &pairs, &options, None)?;
    let transformed = model.generator.transform(raw.view())?;
    let (report, _) = evaluate(transformed.view(), &pairs, &options, None)?;
    let bpc = BpcReport::compare(&baseline, &report).ok();
    Ok(RunOutput {
        summary: RunSummary {
            seed,
            generator_digest: ModelDigest::of(&model).generator,
            probe,
            probe_raw,
            report,
            baseline,
            bpc,
        },
        model,
        log,
    })
}

/// Setting varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    K,
    LeakStrength,
    Schedule,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::K => "K",
            SweepParam::LeakStrength => "leak_strength",
            SweepParam::Schedule => "schedule",
        }
    }

    /// `spec` with this setting replaced by `value` (applied to every adversary
    /// or leaked attribute).
    pub fn apply(self, spec: &ExperimentSpec, value: &str) -> Result<ExperimentSpec, ExperimentError> {
        let bad = || ExperimentError::Sweep(format!("bad {} value {value:?}", self.name()));
        let mut s = spec.clone();
        match self {
            SweepParam::Lambda => {
                let v: f64 = value.parse().map_err(|_| bad())?;
                s.pass.adversaries.iter_mut().for_each(|a| a.lambda = v);
            }
            SweepParam::K => {
                let v: usize = value.parse().map_err(|_| bad())?;
                s.pass.adversaries.iter_mut().for_each(|a| a.k = v);
            }
            SweepParam::LeakStrength => {
                let v: f64 = value.parse().map_err(|_| bad())?;
                s.synth.attributes.iter_mut().for_each(|a| a.leak_strength = v);
            }
            SweepParam::Schedule => {
                s.pass.schedule = value.parse().map_err(|_| bad())?;
            }
        }
        s.pass.validate()?;
        Ok(s)
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "K" | "k" => Ok(SweepParam::K),
            "leak_strength" | "leak" => Ok(SweepParam::LeakStrength),
            "schedule" => Ok(SweepParam::Schedule),
            _ => Err(format!(
                "cannot sweep {s:?}; expected lambda, K, leak_strength or schedule"
            )),
        }
    }
}

/// Result of one `(value, seed)` sub-run; failures are kept, not propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: String,
    pub seed: u64,
    pub outcome: Result<RunSummary, String>,
}

/// One run per `(value, seed)`, spread over `threads` workers. Rows come back
/// in `(value, seed)` order whatever the thread count.
pub fn sweep(
    spec: &ExperimentSpec,
    param: SweepParam,
    values: &[String],
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<SweepRow>, ExperimentError> {
    use rayon::prelude::*;
    if values.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Sweep(
            "value and seed lists must be non-empty".into(),
        ));
    }
    // A bad value fails its own rows only.
    let specs: Vec<Result<ExperimentSpec, String>> = values
        .iter()
        .map(|v| param.apply(spec, v).map_err(|e| e.to_string()))
        .collect();
    let jobs: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ExperimentError::Sweep(e.to_string()))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(v, seed)| SweepRow {
                param,
                value: values[v].clone(),
                seed,
                outcome: specs[v].clone().and_then(|s| {
                    run(&s, seed)
                        .map(|out| out.summary)
                        .map_err(|e| e.to_string())
                }),
            })
            .collect()
    }))
}
