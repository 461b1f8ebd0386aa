#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepo_core::Problem;

/// `V = A A' + 0.05 I` with `A` uniform on `[-scale, scale]`, `mu` uniform on `mu_range`.
pub fn random_problem(seed: u64, n: usize, scale: f64, mu_range: (f64, f64), beta1: f64, r_min: f64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = Array1::from_shape_fn(n, |_| rng.random_range(mu_range.0..mu_range.1));
    let a = Array2::from_shape_fn((n, n), |_| rng.random_range(-scale..scale));
    let cov = a.dot(&a.t()) + Array2::<f64>::eye(n) * 0.05;
    let cov = (&cov + &cov.t()) * 0.5;
    Problem::new(mu, cov, beta1, 1.0, r_min).unwrap()
}

pub fn uniform_vec(seed: u64, n: usize, lo: f64, hi: f64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(n, |_| rng.random_range(lo..hi))
}
