//! Pointwise soft-threshold D-AMP against a plain scalar AMP written out
//! directly on the matrix entries.

use ampsure_core::damp::{damp_init, damp_step, DAmpConfig, DenoiserBank, Estimator};
use ampsure_core::denoise::SoftThreshold;
use ampsure_core::measure::{gaussian_matrix, make_gaussian_op, FieldVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const N: usize = 1024;
const M: usize = 512;
const K: usize = 40;
const THRESHOLD: f64 = 2.0;

fn sparse_signal(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = vec![0.0; N];
    let mut placed = 0;
    while placed < K {
        let i = rng.random_range(0..N);
        if x[i] == 0.0 {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            x[i] = sign * rng.random_range(40.0..200.0);
            placed += 1;
        }
    }
    x
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    let den: f64 = b.iter().map(|q| q * q).sum();
    (num / den).sqrt()
}

/// Textbook AMP with soft thresholding at `k·‖z‖/√m` and the exact
/// divergence (number of surviving entries).
fn scalar_amp(a: &[f64], y: &[f64], m: usize, n: usize, k: f64, iters: usize) -> Vec<Vec<f64>> {
    let mut x = vec![0.0; n];
    let mut z = y.to_vec();
    let mut active = 0usize;
    let mut out = Vec::new();
    for _ in 0..iters {
        let onsager = active as f64 / m as f64;
        let mut z_new = vec![0.0; m];
        for i in 0..m {
            let ax: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            z_new[i] = y[i] - ax + onsager * z[i];
        }
        z = z_new;
        let sigma = (z.iter().map(|v| v * v).sum::<f64>() / m as f64).sqrt();
        let tau = k * sigma;
        active = 0;
        for j in 0..n {
            let r: f64 = x[j] + (0..m).map(|i| a[i * n + j] * z[i]).sum::<f64>();
            x[j] = if r > tau {
                r - tau
            } else if r < -tau {
                r + tau
            } else {
                0.0
            };
            if x[j] != 0.0 {
                active += 1;
            }
        }
        out.push(x.clone());
    }
    out
}

#[test]
fn sparse_recovery_matches_scalar_amp() {
    let truth = sparse_signal(5);
    let op = make_gaussian_op(M, N, 9).unwrap();
    let y = op.apply_slice(&truth).unwrap();
    let FieldVec::Real(yv) = &y else { panic!() };
    let a = gaussian_matrix(M, N, 9);
    let oracle = scalar_amp(&a, yv, M, N, THRESHOLD, 10);

    let d = SoftThreshold::pointwise(THRESHOLD);
    let bank = DenoiserBank::single(&d);
    let cfg = DAmpConfig::default();
    let mut state = damp_init(&op, &y, Estimator::MeasurementDomain).unwrap();
    for (t, reference) in oracle.iter().enumerate() {
        state = damp_step(state, &op, &y, &bank, &cfg).unwrap();
        let ours = rel_err(state.x.pixels(), &truth);
        let theirs = rel_err(reference, &truth);
        assert!((ours - theirs).abs() <= 0.01, "iteration {}: {ours} vs {theirs}", t + 1);
    }
    let last = rel_err(state.x.pixels(), &truth);
    assert!(last < 0.05, "final relative error {last}");
}
