//! Acceptance suite: one line per criterion, `PASS`, `FAIL` or `INCONCLUSIVE`.
//!
//! Runs without the libtest harness so the lines always reach stdout. The
//! process exits nonzero if any criterion fails; an inconclusive statistical
//! comparison is reported but does not fail the run.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{
    check_stage_isolation, compare_series, desk_config, desk_data, numeric_input_grad,
    numeric_param_grad, random_score_set, rel_error, roc_matches_oracle, small_model, smooth_at,
    stage4_members, with_flat_attribute, GRAD_TOL,
};
use ndarray::Array2;
use pass_core::data::{
    decode_descriptors, encode_descriptors, generate_synthetic, identity_halves, AttributeSpec,
    SynthSpec,
};
use pass_core::experiment::{run, ExperimentSpec, RunSummary};
use pass_core::metrics::{
    bias, bpc, evaluate, group_tpr_std, leakage_probe, verification_pairs, EvalOptions,
    PairProtocol,
};
use pass_core::pass::{
    decode_checkpoint, encode_checkpoint, loss_adv_member, loss_att, loss_br, loss_class,
    loss_deb, train, train_multipass, train_pass, Discriminator, PassConfig, Schedule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

enum Outcome {
    Pass(String),
    Fail(String),
    Inconclusive(String),
}

use Outcome::{Fail, Inconclusive, Pass};

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn golden_metrics() -> Outcome {
    let a = bpc(0.015, 0.023, 0.953, 0.946).unwrap();
    let b = bpc(0.006, 0.000, 0.974, 0.950).unwrap();
    let c = bias(0.921, 0.900);
    let d = group_tpr_std(&[0.912, 0.912, 0.864]).unwrap();
    let ok = (a + 0.541).abs() <= 1e-3
        && (b - 0.975).abs() <= 1e-3
        && (c * 1000.0).round() == 21.0
        && (c - 0.021).abs() < 1e-12
        && (d - 0.023).abs() <= 1e-3;
    check(ok, format!("bpc {a:.4} / {b:.4}, bias {c:.3}, std {d:.4}"))
}

fn gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut seed = 0;
    while checked < 24 && seed < 200 {
        let cats = 2 + seed as usize % 3;
        let (model, x, ids) = small_model(seed, &[3.0, 1.5], &[(cats, 3), (2, 2)]);
        seed += 1;
        let br = loss_br(&model, x.view(), &ids).unwrap();
        let tied = br.deb.iter().any(|d| {
            let mut v = d.member_values.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            v[0] - v[1] < 1e-4
        });
        if tied || !smooth_at(&model, &x) {
            continue;
        }
        let f = model.generator.transform(x.view()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..f.nrows()).map(|_| rng.random_range(0..cats)).collect();
        let ens = &model.ensembles[0];

        // class loss: classifier parameters and generator output
        let lc = loss_class(&model.classifier, f.view(), &ids).unwrap();
        let num = numeric_param_grad(model.classifier.net(), |net| {
            let mut m = model.clone();
            *m.classifier.net_mut() = net.clone();
            loss_class(&m.classifier, f.view(), &ids).unwrap().value
        });
        worst = worst.max(rel_error(&lc.classifier.to_vec(), &num));
        let num = numeric_input_grad(&f, |ff| loss_class(&model.classifier, ff.view(), &ids).unwrap().value);
        worst = worst.max(rel_error(lc.input_grad.as_slice().unwrap(), &num));

        // attribute loss: each member's parameters
        let att = loss_att(ens, f.view(), &labels).unwrap();
        for k in 0..ens.k() {
            let num = numeric_param_grad(ens.members[k].net(), |net| {
                let mut e = ens.clone();
                *e.members[k].net_mut() = net.clone();
                loss_att(&e, f.view(), &labels).unwrap().value
            });
            worst = worst.max(rel_error(&att.members[k].grads.to_vec(), &num));
        }

        // adversarial loss of one member and the ensemble maximum, w.r.t. generator output
        let deb = loss_deb(ens, f.view()).unwrap();
        let single = pass_core::pass::Ensemble {
            members: vec![ens.members[0].clone()],
            ..ens.clone()
        };
        let adv = loss_deb(&single, f.view()).unwrap();
        let num = numeric_input_grad(&f, |ff| loss_adv_member(&ens.members[0], ff.view()).unwrap());
        worst = worst.max(rel_error(adv.input_grad.as_slice().unwrap(), &num));
        let num = numeric_input_grad(&f, |ff| loss_deb(ens, ff.view()).unwrap().value);
        worst = worst.max(rel_error(deb.input_grad.as_slice().unwrap(), &num));

        // bias-reduction loss: generator and classifier parameters
        let num = numeric_param_grad(model.generator.net(), |net| {
            let mut m = model.clone();
            *m.generator.net_mut() = net.clone();
            loss_br(&m, x.view(), &ids).unwrap().value
        });
        worst = worst.max(rel_error(&br.generator.to_vec(), &num));
        let num = numeric_param_grad(model.classifier.net(), |net| {
            let mut m = model.clone();
            *m.classifier.net_mut() = net.clone();
            loss_br(&m, x.view(), &ids).unwrap().value
        });
        worst = worst.max(rel_error(&br.classifier.to_vec(), &num));
        checked += 1;
    }
    check(
        checked >= 20 && worst < GRAD_TOL,
        format!("{checked} seeds, worst relative error {worst:.2e} (limit {GRAD_TOL:e})"),
    )
}

fn loss_optima() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_adv: f64 = 0.0;
    for n in [2usize, 3, 4] {
        let mut member = Discriminator::random(8, [6, 5], n, &mut rng).unwrap();
        let last = member.net_mut().layers_mut().last_mut().unwrap();
        last.weights.fill(0.0);
        last.bias.fill(0.0);
        let f = Array2::from_shape_simple_fn((16, 8), || rng.random_range(-3.0..3.0));
        let v = loss_adv_member(&member, f.view()).unwrap();
        worst_adv = worst_adv.max((v - (n as f64).ln()).abs());
    }
    let mut mismatches = 0;
    for seed in 0..100 {
        let (model, x, ids) = small_model(1000 + seed, &[0.0], &[(3, 2)]);
        let br = loss_br(&model, x.view(), &ids).unwrap();
        let f = model.generator.transform(x.view()).unwrap();
        if br.value != loss_class(&model.classifier, f.view(), &ids).unwrap().value {
            mismatches += 1;
        }
    }
    check(
        worst_adv < 1e-9 && mismatches == 0,
        format!("uniform member off ln N by {worst_adv:.1e}; λ=0 mismatches {mismatches}/100"),
    )
}

fn io_round_trip_and_roc_oracle() -> (Outcome, Outcome) {
    let set = generate_synthetic(&SynthSpec {
        n_identities: 20,
        samples_per_identity: 4,
        dim: 12,
        attributes: vec![
            AttributeSpec::balanced("gender", 2, 0.3),
            AttributeSpec::balanced("skintone", 3, 0.3),
        ],
        cluster_spread: 0.1,
        seed: 2,
    })
    .unwrap();
    let bytes = encode_descriptors(&set);
    let back = decode_descriptors(&bytes).unwrap();
    let (model, _, _) = small_model(4, &[1.0], &[(2, 3)]);
    let cfg = PassConfig::desk();
    let ckpt = encode_checkpoint(&model, &cfg);
    let (m2, c2) = decode_checkpoint(&ckpt).unwrap();
    let io = check(
        back == set && encode_descriptors(&back) == bytes && m2 == model && c2 == cfg,
        format!("descriptor file {} bytes, checkpoint {} bytes, exact", bytes.len(), ckpt.len()),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut failures = Vec::new();
    for set in 0..100 {
        let (scores, genuine) = random_score_set(&mut rng, set % 2 == 0);
        let targets: Vec<f64> = (0..20).map(|_| rng.random_range(1e-4..=1.0)).collect();
        if let Err(e) = roc_matches_oracle(&scores, &genuine, &targets) {
            failures.push(format!("set {set}: {e}"));
        }
    }
    let roc = check(
        failures.is_empty(),
        if failures.is_empty() {
            "100 sets (50 tie-heavy) match exhaustive enumeration exactly".into()
        } else {
            failures[0].clone()
        },
    );
    (io, roc)
}

fn stage_isolation() -> Outcome {
    let data = desk_data(0);
    let mut problems = Vec::new();
    for t_ep in [40, 2] {
        let cfg = desk_config(6, 3, t_ep, Schedule::Oat);
        let (_, log) = train_pass(&data, &cfg).unwrap();
        let seq: Vec<usize> = stage4_members(&log)
            .iter()
            .flat_map(|m| m.iter().map(|&(_, k)| k))
            .collect();
        if seq != [0, 1, 2, 0, 1, 2] {
            problems.push(format!("T_ep={t_ep}: members {seq:?}"));
        }
        if let Err(e) = check_stage_isolation(&log, t_ep) {
            problems.push(format!("T_ep={t_ep}: {e}"));
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "members 0,1,2,0,1,2; frozen digests unchanged; re-init at episode ≡ 0 mod T_ep (T_ep 40 and 2)".into()
        } else {
            problems.join("; ")
        },
    )
}

struct Runs {
    pass_oat: Vec<RunSummary>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn debias(runs: &mut Runs) -> Outcome {
    let mut spec = ExperimentSpec::synthetic_desk();
    spec.probe_raw = true;
    let control = spec.control();
    let mut probes = Vec::new();
    let mut raw = Vec::new();
    let mut ratios = Vec::new();
    for seed in 0..3 {
        let deb = run(&spec, seed).unwrap().summary;
        let ctl = run(&control, seed).unwrap().summary;
        probes.push(deb.probe["gender"]);
        raw.push(deb.probe_raw["gender"]);
        ratios.push(deb.tpr_at(1e-2).unwrap() / ctl.tpr_at(1e-2).unwrap());
        runs.pass_oat.push(deb);
    }
    let m = mean(&probes);
    let raw_min = raw.iter().copied().fold(1.0, f64::min);
    let worst_ratio = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    check(
        raw_min >= 0.95 && m <= 0.65 && worst_ratio <= 0.15,
        format!(
            "raw probe min {raw_min:.3} (≥0.95), debiased probe mean {m:.3} (≤0.65) {probes:.3?}, \
             TPR@1e-2 / control {ratios:.3?} (within ±15%)"
        ),
    )
}

fn oat_vs_aet(runs: &Runs) -> Outcome {
    let spec = ExperimentSpec::synthetic_desk();
    let mut aet = spec.clone();
    aet.pass.schedule = Schedule::Aet;
    let mut oat: Vec<f64> = runs.pass_oat.iter().map(|r| r.probe["gender"]).collect();
    for seed in oat.len() as u64..5 {
        oat.push(run(&spec, seed).unwrap().summary.probe["gender"]);
    }
    let aet: Vec<f64> = (0..5).map(|s| run(&aet, s).unwrap().summary.probe["gender"]).collect();
    let (mo, ma) = (mean(&oat), mean(&aet));
    let detail = format!("OAT mean {mo:.4} {oat:.3?}, AET mean {ma:.4} {aet:.3?}");
    if (mo - ma).abs() < 0.01 {
        Inconclusive(format!("{detail}; means differ by < 1 point"))
    } else {
        check(mo <= ma, detail)
    }
}

fn multipass() -> Outcome {
    let spec = ExperimentSpec::synthetic_desk_multipass();
    let control = spec.control();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let deb = run(&spec, seed).unwrap().summary;
        let ctl = run(&control, seed).unwrap().summary;
        for (attr, &p) in &deb.probe {
            let c = ctl.probe[attr];
            ok &= p < c;
            lines.push(format!("{attr} {p:.3}<{c:.3}"));
        }
    }
    // A one-category second attribute contributes nothing, so the run must track PASS.
    let data = with_flat_attribute(&desk_data(7), "flat");
    let mut multi = PassConfig::desk_multipass();
    multi.n_ep = 6;
    multi.t_ep = 2;
    multi.adversaries[1].attribute = "flat".into();
    let mut single = multi.clone();
    single.adversaries.truncate(1);
    let (_, lm) = train_multipass(&data, &multi).unwrap();
    let (_, ls) = train_pass(&data, &single).unwrap();
    let a = &single.adversaries[0].attribute;
    let names = [
        "L_class".to_string(),
        "L_br".into(),
        format!("L_att:{a}"),
        format!("L_deb:{a}"),
        format!("val_acc:{a}"),
    ];
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let same = compare_series(&lm, &ls, &names, 1e-9);
    ok &= same.is_ok();
    check(
        ok,
        format!(
            "probes vs λ=0 control [{}]; degenerate second attribute: {}",
            lines.join(", "),
            match same {
                Ok(n) => format!("{n} records within 1e-9"),
                Err(e) => e,
            }
        ),
    )
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// generate → train → transform → probe → evaluate; digests of everything produced.
fn pipeline_digests(seed: u64) -> Vec<String> {
    let mut spec = ExperimentSpec::synthetic_desk();
    spec.pass.n_ep = 6;
    spec.synth.seed = seed;
    let data = generate_synthetic(&spec.synth).unwrap();
    let (train_part, held) = identity_halves(&data, 0.5, seed).unwrap();
    let mut cfg = spec.pass.clone();
    cfg.seed = seed;
    let (model, log) = train(&train_part, &cfg).unwrap();
    let out = model.transform(&held).unwrap();
    let (ptrain, ptest) = identity_halves(&out, 0.5, seed).unwrap();
    let probe = leakage_probe(&ptrain, &ptest, "gender", &spec.probe).unwrap();
    let pairs = verification_pairs(
        &out,
        &PairProtocol {
            genuine: 1000,
            impostor: 4000,
            group_attribute: Some("gender".into()),
            seed,
        },
    )
    .unwrap();
    let (report, _) = evaluate(out.features_f64().view(), &pairs, &EvalOptions::default(), None).unwrap();
    vec![
        sha(&encode_checkpoint(&model, &cfg)),
        sha(log.to_csv().unwrap().as_bytes()),
        sha(&encode_descriptors(&out)),
        sha(serde_json::to_string(&probe).unwrap().as_bytes()),
        sha(serde_json::to_string(&report).unwrap().as_bytes()),
    ]
}

fn determinism() -> Outcome {
    let a = pipeline_digests(5);
    let b = pipeline_digests(5);
    check(
        a == b,
        format!("checkpoint {}…, log {}…, report {}… identical across repeats", &a[0][..12], &a[1][..12], &a[4][..12]),
    )
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> Option<bool> {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Fail(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, passed) = match outcome {
        Pass(d) => ("PASS", d, Some(true)),
        Fail(d) => ("FAIL", d, Some(false)),
        Inconclusive(d) => ("INCONCLUSIVE", d, None),
    };
    println!("criterion {n} {name:<28} {tag:<12} [{secs:6.1}s] {detail}");
    passed
}

fn main() {
    // Respect libtest-style filters so `cargo test <name>` elsewhere skips this suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results = Vec::new();
    results.push(report(1, "metric golden values", golden_metrics));
    results.push(report(2, "gradient suite", gradients));
    results.push(report(3, "loss optima", loss_optima));
    let (io, roc) = io_round_trip_and_roc_oracle();
    // File round trips are a precondition for the rest; report them with the oracle.
    results.push(report(4, "ROC oracle equivalence", move || match (io, roc) {
        (Pass(a), Pass(b)) => Pass(format!("{b}; {a}")),
        (Fail(a), _) => Fail(format!("round trip: {a}")),
        (_, other) => other,
    }));
    results.push(report(5, "stage isolation, scheduling", stage_isolation));
    let mut runs = Runs { pass_oat: Vec::new() };
    results.push(report(6, "end-to-end debiasing", || debias(&mut runs)));
    results.push(report(7, "OAT vs AET", || oat_vs_aet(&runs)));
    results.push(report(8, "MultiPASS", multipass));
    results.push(report(9, "determinism", determinism));
    let failed = results.iter().filter(|r| **r == Some(false)).count();
    let inconclusive = results.iter().filter(|r| r.is_none()).count();
    println!(
        "acceptance: {} passed, {failed} failed, {inconclusive} inconclusive",
        results.len() - failed - inconclusive
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
