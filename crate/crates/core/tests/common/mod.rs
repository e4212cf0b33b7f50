#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vbsparse::{standardize, Dataset64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

/// A standardized problem whose first `s` coefficients are `signal`.
pub fn sparse_problem(seed: u64, n: usize, p: usize, s: usize, signal: f64) -> (Dataset64, Array1<f64>) {
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, p);
    let beta = Array1::from_shape_fn(p, |j| if j < s { signal } else { 0.0 });
    let noise = Array1::from_shape_fn(n, |_| r.sample::<f64, _>(StandardNormal));
    let y = x.dot(&beta) + noise;
    (standardize(x.view(), y.view()).unwrap(), beta)
}

/// A random vector with entries in `[-scale, scale]`.
pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.random_range(-scale..=scale))
}

pub fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
