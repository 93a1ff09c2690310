//! Compares a backward pass against central differences on a small network.
//!
//!     cargo run --example gradient_check

use pass_core::nn::{one_hot, softmax_cross_entropy, ActivationKind, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(net: &Mlp, x: &ndarray::Array2<f64>, t: &ndarray::Array2<f64>) -> f64 {
    let p = net.predict(x.view()).unwrap();
    softmax_cross_entropy(p.view(), t.view()).unwrap().value
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    use ActivationKind::*;
    let net = Mlp::random(&[6, 8, 5, 3], &[Selu, Selu, Softmax], &mut rng).unwrap();
    let x = ndarray::Array2::from_shape_simple_fn((4, 6), || rng.random_range(-1.0..1.0));
    let t = one_hot(&[0, 2, 1, 2], 3).unwrap();

    let cache = net.forward(x.view()).unwrap();
    let ce = softmax_cross_entropy(cache.output().view(), t.view()).unwrap();
    let analytic = net.backward(&cache, ce.grad.view()).unwrap().grads.to_vec();

    let eps = 1e-5;
    let params = net.params_to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let mut p = params.clone();
        let mut probe = net.clone();
        p[i] += eps;
        probe.set_params_from_slice(&p).unwrap();
        let up = loss(&probe, &x, &t);
        p[i] -= 2.0 * eps;
        probe.set_params_from_slice(&p).unwrap();
        let down = loss(&probe, &x, &t);
        numeric.push((up - down) / (2.0 * eps));
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let rel = norm(&diff) / (norm(&analytic) + norm(&numeric));
    println!("{} parameters, relative error {rel:.2e}", params.len());
}
