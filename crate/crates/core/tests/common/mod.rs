#![allow(dead_code)]

use mrp_core::{accumulate, dampen, DenseMatrix, HessianState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `m×b` activations whose features follow an AR(1) chain with coefficient `rho`.
pub fn correlated_activations(rng: &mut ChaCha8Rng, m: usize, b: usize, rho: f64) -> DenseMatrix {
    let innov = (1.0 - rho * rho).sqrt();
    let scales: Vec<f64> = (0..m).map(|_| 0.5 + rng.random::<f64>() * 1.5).collect();
    let mut x = DenseMatrix::zeros(m, b);
    for t in 0..b {
        let mut prev: f64 = rng.sample(StandardNormal);
        for i in 0..m {
            if i > 0 {
                let z: f64 = rng.sample(StandardNormal);
                prev = rho * prev + innov * z;
            }
            x[(i, t)] = scales[i] * prev;
        }
    }
    x
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Damped statistic from correlated calibration data.
pub fn correlated_hessian(rng: &mut ChaCha8Rng, m: usize, gamma_rel: f64) -> HessianState {
    let b = 2 * m + 8;
    let x = correlated_activations(rng, m, b, 0.8);
    dampen(&accumulate([&x]).unwrap(), gamma_rel).unwrap()
}

/// Random strictly increasing subset of `0..m` with `k` elements.
pub fn random_subset(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    for i in 0..k {
        let j = rng.random_range(i..m);
        idx.swap(i, j);
    }
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `½·δ·G·δᵀ`.
pub fn half_quad(g: &DenseMatrix, d: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            acc += d[i] * g[(i, j)] * d[j];
        }
    }
    0.5 * acc
}
