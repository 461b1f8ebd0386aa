//! Gradient of the smooth part, its Lipschitz bound, and the two closed-form
//! proximal maps used by the solver.

use ndarray::{Array1, ArrayView1};

use crate::error::{Result, SepoError};
use crate::model::{PortfolioProblem, ProjectionVariant};
use crate::scalar::Scalar;

/// `grad P(x, lambda) = b1 V x - mu + b2 x + lambda e + rho (e'x - 1) e`
pub fn grad_smooth<T: Scalar>(problem: &PortfolioProblem<T>, x: ArrayView1<T>, lambda: T, rho: T) -> Result<Array1<T>> {
    problem.check_len("weights", x.len())?;
    let shift = lambda + rho * (x.sum() - T::one());
    let mut g = problem.cov().dot(&x);
    g.zip_mut_with(problem.mu(), |gi, &mi| *gi = *gi * problem.beta1() - mi + shift);
    g.scaled_add(problem.beta2(), &x);
    Ok(g)
}

/// Upper bound on the Lipschitz constant of `grad P`, obtained from the
/// triangle inequality on Frobenius norms:
/// `b1 sqrt(tr(VV')) + b2 sqrt(n) + rho n`.
pub fn lipschitz_estimate<T: Scalar>(problem: &PortfolioProblem<T>, rho: T) -> T {
    let n = T::of_usize(problem.n());
    let frob = problem.cov().iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
    problem.beta1() * frob + problem.beta2() * n.sqrt() + rho * n
}

/// Hard thresholding at `sqrt(2 sigma)`.
///
/// The comparison is on the signed value, so every negative entry maps to
/// zero; this is what keeps the solver's iterates nonnegative. Equivalently,
/// this is the exact prox of `sigma |y|_0` plus the indicator of `y >= 0`.
pub fn prox_l0<T: Scalar>(x: ArrayView1<T>, sigma: T, tie_break_to_zero: bool) -> Result<Array1<T>> {
    if !(sigma > T::zero()) {
        return Err(SepoError::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let threshold = (T::lit(2.0) * sigma).sqrt();
    Ok(x.mapv(|v| if v > threshold || (v == threshold && !tie_break_to_zero) { v } else { T::zero() }))
}

/// Maps `x` onto the return half-space `{y : mu'y >= r_min}`; feasible points are returned unchanged.
pub fn project_return<T: Scalar>(
    x: ArrayView1<T>,
    mu: ArrayView1<T>,
    r_min: T,
    variant: ProjectionVariant,
) -> Result<Array1<T>> {
    if x.len() != mu.len() {
        return Err(SepoError::DimensionMismatch { what: "weights", expected: mu.len(), got: x.len() });
    }
    let ret = mu.dot(&x);
    if ret >= r_min {
        return Ok(x.to_owned());
    }
    match variant {
        ProjectionVariant::PaperScaling => {
            if !(ret > T::zero()) {
                return Err(SepoError::NonpositiveReturn { portfolio_return: ret.as_f64() });
            }
            Ok(x.mapv(|v| v * (r_min / ret)))
        }
        ProjectionVariant::EuclideanHalfspace => {
            let mu_sq = mu.dot(&mu);
            if !(mu_sq > T::zero()) {
                // mu = 0 with r_min > 0: the half-space is empty
                return Err(SepoError::NonpositiveReturn { portfolio_return: ret.as_f64() });
            }
            let mut y = x.to_owned();
            y.scaled_add((r_min - ret) / mu_sq, &mu);
            // one rounding step can land a hair below the boundary
            let got = mu.dot(&y);
            if got < r_min {
                y.scaled_add((r_min - got) / mu_sq, &mu);
            }
            Ok(y)
        }
    }
}
