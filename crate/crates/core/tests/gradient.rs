//! Backprop against central finite differences of the batch loss.

use hallglove::neural::{backward, batch_loss, MlpParameters};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn numeric_gradient(p: &MlpParameters, batch: &[(&[f64], usize)]) -> MlpParameters {
    let mut grad = MlpParameters::zeros(p.n_in, p.n_hidden, p.n_out);
    let mut probe = p.clone();
    for t in 0..4 {
        for i in 0..p.tensors()[t].len() {
            let orig = p.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + STEP;
            let up = batch_loss(&probe, batch).unwrap();
            probe.tensors_mut()[t][i] = orig - STEP;
            let down = batch_loss(&probe, batch).unwrap();
            probe.tensors_mut()[t][i] = orig;
            grad.tensors_mut()[t][i] = (up - down) / (2.0 * STEP);
        }
    }
    grad
}

/// Worst relative error over every parameter. The denominator floor keeps
/// near-zero components from dominating through round-off alone.
fn max_relative_error(a: &MlpParameters, b: &MlpParameters) -> f64 {
    let mut worst: f64 = 0.0;
    for (ta, tb) in a.tensors().iter().zip(b.tensors()) {
        for (x, y) in ta.iter().zip(tb) {
            let rel = (x - y).abs() / (x.abs() + y.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let p = MlpParameters::glorot(20, 24, 11, &mut rng);
        let batch_len = 1 + draw % 4;
        let inputs: Vec<Vec<f64>> = (0..batch_len)
            .map(|_| (0..20).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let batch: Vec<(&[f64], usize)> = inputs
            .iter()
            .map(|x| (x.as_slice(), rng.random_range(0..11)))
            .collect();
        let analytic = backward(&p, &batch).unwrap();
        let numeric = numeric_gradient(&p, &batch);
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    println!("max relative gradient error over 100 draws: {worst:.3e}");
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn small_network_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = MlpParameters::glorot(3, 4, 2, &mut rng);
    let x = [0.2, -0.4, 0.9];
    let batch = [(&x[..], 1usize)];
    let worst = max_relative_error(&backward(&p, &batch).unwrap(), &numeric_gradient(&p, &batch));
    assert!(worst < 1e-4, "{worst}");
}
