#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng as _;
use smcal::rng::rng_from_seed;

/// Random instance with covariates and weights drawn uniformly.
pub fn instance(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let w = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    (x, w)
}

pub fn random_beta(d: usize, anchor_sign: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
    b[0] = anchor_sign;
    b
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Row `i` of `x` dotted with `beta`.
pub fn score(x: &Array2<f64>, i: usize, beta: &[f64]) -> f64 {
    (0..beta.len()).map(|k| x[[i, k]] * beta[k]).sum()
}
