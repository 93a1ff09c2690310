#![allow(dead_code)]

use ndarray::Array2;
use pass_core::metrics::{roc, tpr_at_fpr, RocPoint};
use pass_core::nn::Mlp;
use pass_core::pass::{Ensemble, Generator, IdentityClassifier, PassModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-12)` over whole gradient vectors.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (norm(analytic) + norm(numeric)).max(1e-12)
}

/// Central differences of `f` with respect to every parameter of `net`.
pub fn numeric_param_grad(net: &Mlp, mut f: impl FnMut(&Mlp) -> f64) -> Vec<f64> {
    let base = net.params_to_vec();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + EPS;
        probe.set_params_from_slice(&params).unwrap();
        let up = f(&probe);
        params[i] = base[i] - EPS;
        probe.set_params_from_slice(&params).unwrap();
        let down = f(&probe);
        params[i] = base[i];
        out.push((up - down) / (2.0 * EPS));
    }
    out
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_input_grad(x: &Array2<f64>, mut f: impl FnMut(&Array2<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        probe[[r, c]] = x[[r, c]] + EPS;
        let up = f(&probe);
        probe[[r, c]] = x[[r, c]] - EPS;
        let down = f(&probe);
        probe[[r, c]] = x[[r, c]];
        out.push((up - down) / (2.0 * EPS));
    }
    out
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// A small model with one ensemble per `(categories, k)` entry, plus a batch.
pub fn small_model(
    seed: u64,
    lambdas: &[f64],
    ensembles: &[(usize, usize)],
) -> (PassModel, Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_in = rng.random_range(4..=12);
    let d_out = rng.random_range(3..=10);
    let ids = rng.random_range(2..=6);
    let batch = rng.random_range(4..=10);
    let model = PassModel {
        generator: Generator::random(d_in, d_out, &mut rng).unwrap(),
        classifier: IdentityClassifier::random(d_out, ids, &mut rng).unwrap(),
        ensembles: ensembles
            .iter()
            .zip(lambdas)
            .enumerate()
            .map(|(e, (&(cats, k), &lambda))| {
                Ensemble::random(format!("a{e}"), lambda, k, d_out, [8, 6], cats, &mut rng).unwrap()
            })
            .collect(),
    };
    let x = random_matrix(batch, d_in, &mut rng);
    let labels = (0..batch).map(|_| rng.random_range(0..ids)).collect();
    (model, x, labels)
}

/// Smallest |pre-activation| feeding a PReLU or SELU anywhere in `net` on `x`.
/// Central differences straddling such a kink are not meaningful.
pub fn kink_margin(net: &Mlp, x: &Array2<f64>) -> f64 {
    use pass_core::nn::Activation;
    let layers = net.layers();
    let mut margin = f64::INFINITY;
    for (l, layer) in layers.iter().enumerate() {
        if !matches!(layer.activation, Activation::PRelu { .. } | Activation::Selu) {
            continue;
        }
        let input = if l == 0 {
            x.clone()
        } else {
            Mlp::new(layers[..l].to_vec()).unwrap().predict(x.view()).unwrap()
        };
        let z = input.dot(&layer.weights.t()) + &layer.bias;
        margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
    }
    margin
}

pub const KINK_MARGIN: f64 = 1e-3;

/// True when no network in `model` has a kink within reach of the difference step on `x`.
pub fn smooth_at(model: &PassModel, x: &Array2<f64>) -> bool {
    if kink_margin(model.generator.net(), x) < KINK_MARGIN {
        return false;
    }
    let f = model.generator.transform(x.view()).unwrap();
    model
        .ensembles
        .iter()
        .flat_map(|e| &e.members)
        .all(|m| kink_margin(m.net(), &f) >= KINK_MARGIN)
}

/// Counts directly at every candidate threshold, accepting `score >= t`.
fn oracle_points(scores: &[f64], genuine: &[bool]) -> Vec<RocPoint> {
    let n_gen = genuine.iter().filter(|&&g| g).count();
    let n_imp = genuine.len() - n_gen;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds.insert(0, f64::INFINITY);
    thresholds
        .into_iter()
        .map(|t| {
            let tp = scores.iter().zip(genuine).filter(|(s, g)| **g && **s >= t).count();
            let fp = scores.iter().zip(genuine).filter(|(s, g)| !**g && **s >= t).count();
            RocPoint {
                threshold: t,
                fpr: fp as f64 / n_imp as f64,
                tpr: tp as f64 / n_gen as f64,
            }
        })
        .collect()
}

fn oracle_tpr(points: &[RocPoint], target: f64) -> f64 {
    points
        .iter()
        .filter(|p| p.fpr <= target)
        .map(|p| p.tpr)
        .fold(0.0, f64::max)
}

/// Checks one score set against the oracle; returns a description of the first mismatch.
pub fn roc_matches_oracle(scores: &[f64], genuine: &[bool], targets: &[f64]) -> Result<(), String> {
    let curve = roc(scores, genuine).map_err(|e| e.to_string())?;
    let want = oracle_points(scores, genuine);
    if curve.points != want {
        return Err(format!("points differ: {:?} vs {:?}", curve.points, want));
    }
    let mut all_targets: Vec<f64> = targets.to_vec();
    all_targets.extend(want.iter().map(|p| p.fpr).filter(|&f| f > 0.0));
    for t in all_targets {
        let got = tpr_at_fpr(&curve, t).map_err(|e| e.to_string())?;
        if got != oracle_tpr(&want, t) {
            return Err(format!("tpr at {t}: {got} vs {}", oracle_tpr(&want, t)));
        }
    }
    Ok(())
}

pub fn random_score_set(rng: &mut ChaCha8Rng, tie_heavy: bool) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=1000);
    let levels = rng.random_range(2..=6);
    let mut genuine: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    genuine[0] = true;
    genuine[1] = false;
    let scores = genuine
        .iter()
        .map(|&g| {
            if tie_heavy {
                rng.random_range(0..levels) as f64 / levels as f64
            } else {
                rng.random_range(-1.0..1.0) + if g { 0.5 } else { 0.0 }
            }
        })
        .collect();
    (scores, genuine)
}

use pass_core::data::{AttributeColumn, DescriptorSet};
use pass_core::experiment::ExperimentSpec;
use pass_core::pass::{PassConfig, Schedule, TrainLog};

/// The desk synthetic set (100 identities × 20 samples, dim 64, binary gender).
pub fn desk_data(seed: u64) -> DescriptorSet {
    let mut synth = ExperimentSpec::synthetic_desk().synth;
    synth.seed = seed;
    pass_core::data::generate_synthetic(&synth).unwrap()
}

/// Desk profile cut to `n_ep` episodes with a `k`-member ensemble.
pub fn desk_config(n_ep: usize, k: usize, t_ep: usize, schedule: Schedule) -> PassConfig {
    let mut cfg = PassConfig::desk();
    cfg.n_ep = n_ep;
    cfg.t_ep = t_ep;
    cfg.schedule = schedule;
    cfg.adversaries[0].k = k;
    cfg
}

/// Adds a one-category attribute named `name`.
pub fn with_flat_attribute(set: &DescriptorSet, name: &str) -> DescriptorSet {
    set.with_attribute(AttributeColumn::new(name, 1, vec![0; set.len()]))
        .unwrap()
}

/// First mismatch between the series both logs carry, if any, beyond `tol`.
pub fn compare_series(a: &TrainLog, b: &TrainLog, names: &[&str], tol: f64) -> Result<usize, String> {
    let mut compared = 0;
    for name in names {
        let (x, y) = (a.series(name), b.series(name));
        if x.len() != y.len() {
            return Err(format!("{name}: {} vs {} records", x.len(), y.len()));
        }
        for (i, (u, v)) in x.iter().zip(&y).enumerate() {
            if (u - v).abs() > tol {
                return Err(format!("{name}[{i}]: {u} vs {v}"));
            }
        }
        compared += x.len();
    }
    Ok(compared)
}

/// Checks every stage record touched only what its stage may touch.
pub fn check_stage_isolation(log: &TrainLog, t_ep: usize) -> Result<(), String> {
    for s in &log.stages {
        let (b, a) = (&s.before, &s.after);
        let tag = format!("episode {} stage {}", s.episode, s.stage);
        let members_same = |keep: &dyn Fn(usize, usize) -> bool| -> Result<(), String> {
            for (e, (mb, ma)) in b.members.iter().zip(&a.members).enumerate() {
                for (k, (x, y)) in mb.iter().zip(ma).enumerate() {
                    if keep(e, k) && x != y {
                        return Err(format!("{tag}: frozen member ({e},{k}) changed"));
                    }
                }
            }
            Ok(())
        };
        match s.stage {
            1 | 3 => {
                members_same(&|_, _| true)?;
                if s.iterations > 0 && b.generator == a.generator {
                    return Err(format!("{tag}: generator did not move"));
                }
            }
            2 | 4 => {
                if b.generator != a.generator || b.classifier != a.classifier {
                    return Err(format!("{tag}: generator or classifier changed"));
                }
                members_same(&|e, k| !s.trained_members.contains(&(e, k)))?;
                if s.stage == 2 && s.reinitialized != (s.episode % t_ep == 0) {
                    return Err(format!("{tag}: re-initialization off schedule"));
                }
                if s.iterations > 0 {
                    for &(e, k) in &s.trained_members {
                        if b.members[e][k] == a.members[e][k] {
                            return Err(format!("{tag}: trained member ({e},{k}) did not move"));
                        }
                    }
                }
            }
            other => return Err(format!("unknown stage {other}")),
        }
    }
    let reinit: Vec<usize> = log
        .stages
        .iter()
        .filter(|s| s.stage == 2)
        .map(|s| s.episode)
        .collect();
    let episodes = log.stages.iter().map(|s| s.episode).max().unwrap_or(0) + 1;
    let want: Vec<usize> = (0..episodes).filter(|e| e % t_ep == 0).collect();
    if reinit != want {
        return Err(format!("stage 2 ran at {reinit:?}, expected {want:?}"));
    }
    Ok(())
}

/// Member index trained in stage 4 of each episode, for single-member schedules.
pub fn stage4_members(log: &TrainLog) -> Vec<Vec<(usize, usize)>> {
    log.stages
        .iter()
        .filter(|s| s.stage == 4)
        .map(|s| s.trained_members.clone())
        .collect()
}
