//! Group TPRs, bias and BPC from a handful of scored pairs.
//!
//!     cargo run --example fairness_metrics

use pass_core::metrics::{bpc, evaluate, roc, tpr_at_fpr, EvalOptions, Pair, PairList};

fn main() {
    let curve = roc(&[0.9, 0.8, 0.95, 0.1], &[true, true, false, false]).unwrap();
    for p in &curve.points {
        println!("threshold {:>5} fpr {:.2} tpr {:.2}", p.threshold, p.fpr, p.tpr);
    }
    println!("TPR at FPR 0.5: {}", tpr_at_fpr(&curve, 0.5).unwrap());

    // Row 0 is the probe; every other row sits at a chosen cosine from it.
    let spec = [
        (0.9, true, "f"), (0.6, true, "f"), (0.7, false, "f"), (0.2, false, "f"),
        (0.8, true, "m"), (0.5, true, "m"), (0.4, false, "m"), (0.3, false, "m"),
    ];
    let mut f = ndarray::Array2::<f64>::zeros((spec.len() + 1, 2));
    f[[0, 0]] = 1.0;
    let mut pairs = Vec::new();
    for (k, &(s, genuine, g)) in spec.iter().enumerate() {
        f[[k + 1, 0]] = s;
        f[[k + 1, 1]] = (1.0 - s * s).sqrt();
        pairs.push(Pair { i: 0, j: k + 1, genuine, group: Some(g.into()) });
    }
    let opts = EvalOptions { fprs: vec![0.1, 0.25, 0.5], ..EvalOptions::default() };
    let (rep, _) = evaluate(f.view(), &PairList { pairs }, &opts, None).unwrap();
    print!("{}", rep.to_csv(None));

    println!("BPC, bias 0.015 -> 0.023, TPR 0.953 -> 0.946: {:.3}",
        bpc(0.015, 0.023, 0.953, 0.946).unwrap());
}
