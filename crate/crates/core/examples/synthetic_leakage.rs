//! How much a probe recovers an attribute as the synthetic leak grows.
//!
//!     cargo run --release --example synthetic_leakage

use pass_core::data::{generate_synthetic, identity_halves, AttributeSpec, SynthSpec};
use pass_core::metrics::{leakage_probe, ProbeConfig};

fn main() {
    let probe = ProbeConfig {
        iterations: 1500,
        learning_rate: 1e-2,
        batch_size: 128,
        ..ProbeConfig::default()
    };
    println!("leak  probe accuracy");
    for leak in [0.0, 0.035, 0.07, 0.14, 0.35, 0.7] {
        let set = generate_synthetic(&SynthSpec {
            n_identities: 100,
            samples_per_identity: 20,
            dim: 64,
            attributes: vec![AttributeSpec::balanced("gender", 2, leak)],
            cluster_spread: 0.07,
            seed: 0,
        })
        .unwrap();
        let (train, test) = identity_halves(&set, 0.5, 0).unwrap();
        let r = leakage_probe(&train, &test, "gender", &probe).unwrap();
        println!("{leak:<5} {:.3}", r.accuracy);
    }
}
