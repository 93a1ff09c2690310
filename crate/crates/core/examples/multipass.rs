//! Suppresses two attributes at once.
//!
//!     cargo run --release --example multipass

use pass_core::experiment::{run, ExperimentSpec};

fn main() {
    let spec = ExperimentSpec::synthetic_desk_multipass();
    let deb = run(&spec, 0).unwrap().summary;
    let ctl = run(&spec.control(), 0).unwrap().summary;
    for (attr, acc) in &deb.probe {
        println!("{attr:<9} control {:.3}  suppressed {acc:.3}", ctl.probe[attr]);
    }
    // On easy synthetic data the raw baseline often has zero bias, which leaves BPC undefined.
    for (e, b) in deb.report.entries.iter().zip(&deb.baseline.entries) {
        let bpc = deb.bpc.as_ref().and_then(|r| r.entries.iter().find(|x| x.fpr == e.fpr)?.bpc);
        println!("FPR {:e}: TPR {:.3} (raw {:.3}), bias {:?} (raw {:?}), BPC {}",
            e.fpr, e.tpr_overall, b.tpr_overall, e.bias, b.bias,
            bpc.map_or("undefined".into(), |v| format!("{v:.3}")));
    }
}
