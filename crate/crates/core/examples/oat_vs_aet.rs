//! One-at-a-time against all-at-once ensemble training over paired seeds.
//!
//!     cargo run --release --example oat_vs_aet [seeds]

use pass_core::experiment::{run, ExperimentSpec};
use pass_core::pass::Schedule;

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let oat = ExperimentSpec::synthetic_desk();
    let mut aet = oat.clone();
    aet.pass.schedule = Schedule::Aet;
    let (mut so, mut sa) = (0.0, 0.0);
    for seed in 0..seeds {
        let o = run(&oat, seed).unwrap().summary.probe["gender"];
        let a = run(&aet, seed).unwrap().summary.probe["gender"];
        println!("seed {seed}: OAT {o:.3}  AET {a:.3}");
        so += o;
        sa += a;
    }
    println!("mean: OAT {:.4}  AET {:.4}", so / seeds as f64, sa / seeds as f64);
}
