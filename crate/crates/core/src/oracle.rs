//! Exhaustive reference solver for small universes.
//!
//! Every nonempty support set is visited and, on each, the mean-variance part
//! of the objective is minimized by brute force over the grid
//! `{x : x_i = c_i / m, c_i >= 1 on the support, sum c_i = m}` filtered by
//! `mu'x >= r_min`. The support size is then added for the `|x|_0` term.
//! Nothing here touches the gradient, the proximal maps or the solver, so the
//! result can be used to check them.

use ndarray::Array1;
use rayon::prelude::*;

use crate::error::{Result, SepoError};
use crate::model::PortfolioProblem;
use crate::scalar::Scalar;

/// Largest universe the oracle accepts.
pub const MAX_ORACLE_ASSETS: usize = 6;

/// Objective, weights and support of one candidate.
type Candidate<T> = (T, Array1<T>, Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<T> {
    pub weights: Array1<T>,
    /// Objective of the original problem, `|x|_0` included.
    pub objective: T,
    /// Sorted asset indices with nonzero weight.
    pub support: Vec<usize>,
    /// Grid denominator `m`; the effective step is `1/m`.
    pub grid_points_per_unit: usize,
}

/// Default grid step: `1e-3` up to three assets, `1e-2` above.
pub fn default_grid_step<T: Scalar>(n: usize) -> T {
    if n <= 3 {
        T::lit(1e-3)
    } else {
        T::lit(1e-2)
    }
}

fn grid_denominator<T: Scalar>(grid_step: T) -> usize {
    let inv = T::one() / grid_step;
    let rounded = inv.round();
    let m = if (inv - rounded).abs() <= T::lit(1e-9) * rounded { rounded } else { inv.ceil() };
    m.to_usize().unwrap_or(usize::MAX).max(1)
}

/// Worst-case objective gap between the continuous minimizer on a support
/// and its nearest grid point, `G d + L d^2 / 2` with `d = step * sqrt(n)`.
/// Only the smooth part moves; the support size is the same on both.
pub fn grid_resolution_bound<T: Scalar>(problem: &PortfolioProblem<T>, grid_step: T) -> T {
    let frob = problem.cov().iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
    let mu_norm = problem.mu().dot(problem.mu()).sqrt();
    let curvature = problem.beta1() * frob + problem.beta2();
    let grad_bound = curvature + mu_norm;
    let step = T::one() / T::of_usize(grid_denominator(grid_step));
    let d = step * T::of_usize(problem.n()).sqrt();
    grad_bound * d + T::lit(0.5) * curvature * d * d
}

/// Brute-force minimum of the original constrained problem. The budget is
/// enforced exactly, not through a penalty, so no solver settings are involved.
pub fn oracle_solve<T: Scalar>(problem: &PortfolioProblem<T>, grid_step: T) -> Result<OracleSolution<T>> {
    let n = problem.n();
    if n > MAX_ORACLE_ASSETS {
        return Err(SepoError::InvalidOracleInput(format!(
            "oracle handles at most {MAX_ORACLE_ASSETS} assets, got {n}"
        )));
    }
    if !(grid_step > T::zero()) || grid_step > T::one() {
        return Err(SepoError::InvalidOracleInput(format!("grid step must lie in (0, 1], got {grid_step}")));
    }
    let m = grid_denominator(grid_step);

    let per_support: Vec<Option<Candidate<T>>> = (1u32..(1u32 << n))
        .into_par_iter()
        .map(|mask| {
            let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            best_on_support(problem, &support, m).map(|(v, x)| (v, x, support))
        })
        .collect();

    let mut best: Option<Candidate<T>> = None;
    for candidate in per_support.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some((v, _, s)) => candidate.0 < *v || (candidate.0 == *v && candidate.2 < *s),
        };
        if better {
            best = Some(candidate);
        }
    }
    match best {
        Some((objective, weights, support)) => {
            Ok(OracleSolution { weights, objective, support, grid_points_per_unit: m })
        }
        None => Err(SepoError::Infeasible {
            r_min: problem.r_min().as_f64(),
            max_return: problem.mu().iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64())),
        }),
    }
}

/// Best feasible grid point with every support weight at least `1/m`.
fn best_on_support<T: Scalar>(problem: &PortfolioProblem<T>, support: &[usize], m: usize) -> Option<(T, Array1<T>)> {
    let k = support.len();
    if k > m {
        return None;
    }
    let n = problem.n();
    let inv_m = T::one() / T::of_usize(m);
    let count = T::of_usize(k);
    let mut parts = vec![1usize; k];
    parts[k - 1] = m - (k - 1);
    let mut x = Array1::<T>::zeros(n);
    let mut best: Option<(T, Array1<T>)> = None;
    loop {
        for (&i, &c) in support.iter().zip(&parts) {
            x[i] = T::of_usize(c) * inv_m;
        }
        if problem.mu().dot(&x) >= problem.r_min() {
            let v = problem.mean_variance_part(x.view()) + count;
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, x.clone()));
            }
        }
        if !next_composition(&mut parts) {
            break;
        }
    }
    best
}

/// Advances `parts` (positive, fixed sum) to the next composition in
/// lexicographic order. Returns `false` after the last one.
fn next_composition(parts: &mut [usize]) -> bool {
    let k = parts.len();
    if k < 2 {
        return false;
    }
    // rightmost position before the tail that can grow by borrowing from the tail
    let mut i = k - 1;
    while i > 0 {
        i -= 1;
        let tail_sum: usize = parts[i + 1..].iter().sum();
        let tail_len = k - i - 1;
        if tail_sum > tail_len {
            parts[i] += 1;
            let rest = tail_sum - 1;
            for p in parts[i + 1..k - 1].iter_mut() {
                *p = 1;
            }
            parts[k - 1] = rest - (tail_len - 1);
            return true;
        }
    }
    false
}
