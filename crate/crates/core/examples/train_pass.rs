//! Trains a single-attribute model on synthetic descriptors and compares it
//! with an unsuppressed control.
//!
//!     cargo run --release --example train_pass

use pass_core::experiment::{run, ExperimentSpec};

fn main() {
    let mut spec = ExperimentSpec::synthetic_desk();
    spec.probe_raw = true;
    let deb = run(&spec, 0).unwrap();
    let ctl = run(&spec.control(), 0).unwrap();

    let s = &deb.summary;
    println!("gender probe: raw {:.3}, control {:.3}, suppressed {:.3}",
        s.probe_raw["gender"], ctl.summary.probe["gender"], s.probe["gender"]);
    println!("TPR@1e-2: control {:.3}, suppressed {:.3}",
        ctl.summary.tpr_at(1e-2).unwrap(), s.tpr_at(1e-2).unwrap());
    let l_deb = deb.log.series("L_deb:gender");
    println!("{} episodes, last L_deb {:.4}", spec.pass.n_ep, l_deb.last().unwrap());
}
