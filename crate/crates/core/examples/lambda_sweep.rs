//! Sweeps the suppression weight across two seeds in parallel.
//!
//!     cargo run --release --example lambda_sweep

use pass_core::experiment::{sweep, ExperimentSpec, SweepParam};

fn main() {
    let mut spec = ExperimentSpec::synthetic_desk();
    spec.pass.n_ep = 30;
    let values: Vec<String> = ["0", "1", "10", "50"].map(String::from).to_vec();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = sweep(&spec, SweepParam::Lambda, &values, &[0, 1], threads).unwrap();
    println!("lambda seed probe  tpr@1e-2");
    for r in rows {
        match r.outcome {
            Ok(s) => println!("{:<6} {:<4} {:.3}  {:.3}", r.value, r.seed, s.probe["gender"], s.tpr_at(1e-2).unwrap()),
            Err(e) => println!("{:<6} {:<4} failed: {e}", r.value, r.seed),
        }
    }
}
