//! Problem data, solver settings and the objective evaluations shared by the
//! rest of the crate.
//!
//! The optimization problem is
//!
//! ```text
//! minimize   (b1/2) x'Vx - mu'x + (b2/2)|x|^2 + |x|_0
//! subject to mu'x >= r,  e'x = 1,  x >= 0
//! ```
//!
//! and the solver works on its augmented Lagrangian in `x` with multiplier
//! `lambda` on the budget constraint `e'x = 1`. The smooth part of that
//! Lagrangian is `P(x, lambda)`; the merit adds `|x|_0` and the indicator of
//! the return half-space.

use std::ops::Deref;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SepoError};
use crate::scalar::Scalar;

/// Entries with `|x_i| <= ZERO_TOL` count as zero in `|x|_0` and sparsity.
pub const ZERO_TOL: f64 = 1e-12;

/// Relative tolerance for the covariance symmetry check (f64).
const SYMMETRY_RTOL: f64 = 1e-12;

/// Merit value standing in for `+inf` when `x` violates `mu'x >= r_min`.
pub fn infeasible_merit<T: Scalar>() -> T {
    T::max_value()
}

pub fn is_infeasible_merit<T: Scalar>(v: T) -> bool {
    v == T::max_value()
}

/// Asset statistics plus model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioProblem<T: Scalar> {
    mu: Array1<T>,
    cov: Array2<T>,
    beta1: T,
    beta2: T,
    r_min: T,
}

impl<T: Scalar> PortfolioProblem<T> {
    pub fn new(mu: Array1<T>, cov: Array2<T>, beta1: T, beta2: T, r_min: T) -> Result<Self> {
        Self::build(mu, cov, beta1, beta2, r_min, true)
    }

    /// Like [`PortfolioProblem::new`] but accepts `r_min > max(mu)`. Such a
    /// problem has no feasible portfolio; the oracle reports that instead of
    /// failing at construction.
    pub fn new_unchecked_floor(mu: Array1<T>, cov: Array2<T>, beta1: T, beta2: T, r_min: T) -> Result<Self> {
        Self::build(mu, cov, beta1, beta2, r_min, false)
    }

    fn build(mu: Array1<T>, cov: Array2<T>, beta1: T, beta2: T, r_min: T, check_floor: bool) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(SepoError::InvalidProblem("empty asset universe".into()));
        }
        if cov.nrows() != n {
            return Err(SepoError::DimensionMismatch { what: "covariance rows", expected: n, got: cov.nrows() });
        }
        if cov.ncols() != n {
            return Err(SepoError::DimensionMismatch { what: "covariance columns", expected: n, got: cov.ncols() });
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(SepoError::InvalidProblem("mean return vector has non-finite entries".into()));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(SepoError::InvalidProblem("covariance has non-finite entries".into()));
        }
        // f32 cannot hold 1e-12 relative agreement, so the tolerance floors at a few ulps.
        let rtol = T::lit(SYMMETRY_RTOL).max(T::lit(8.0) * T::epsilon());
        let scale = cov.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::min_positive_value());
        for i in 0..n {
            for j in (i + 1)..n {
                if (cov[[i, j]] - cov[[j, i]]).abs() > rtol * scale {
                    return Err(SepoError::InvalidProblem(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        if !(beta1 > T::zero()) || !beta1.is_finite() {
            return Err(SepoError::InvalidProblem(format!("beta1 must be positive, got {beta1}")));
        }
        if !(beta2 > T::zero()) || !beta2.is_finite() {
            return Err(SepoError::InvalidProblem(format!("beta2 must be positive, got {beta2}")));
        }
        let max_mu = mu.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        if !(r_min >= T::zero()) || !r_min.is_finite() || (check_floor && r_min > max_mu) {
            return Err(SepoError::InvalidProblem(format!(
                "r_min must lie in [0, max(mu)] = [0, {max_mu}], got {r_min}"
            )));
        }
        Ok(Self { mu, cov, beta1, beta2, r_min })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
    pub fn mu(&self) -> &Array1<T> {
        &self.mu
    }
    pub fn cov(&self) -> &Array2<T> {
        &self.cov
    }
    pub fn beta1(&self) -> T {
        self.beta1
    }
    pub fn beta2(&self) -> T {
        self.beta2
    }
    pub fn r_min(&self) -> T {
        self.r_min
    }

    pub(crate) fn check_len(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.n() {
            return Err(SepoError::DimensionMismatch { what, expected: self.n(), got });
        }
        Ok(())
    }

    /// Objective of the original problem at `x`: `(b1/2)x'Vx - mu'x + (b2/2)|x|^2 + |x|_0`.
    /// Constraints are not checked.
    pub fn objective(&self, x: ArrayView1<T>) -> Result<T> {
        self.check_len("weights", x.len())?;
        Ok(self.mean_variance_part(x) + T::of_usize(l0_norm(x)))
    }

    /// `(b1/2)x'Vx - mu'x + (b2/2)|x|^2`
    pub(crate) fn mean_variance_part(&self, x: ArrayView1<T>) -> T {
        let half = T::lit(0.5);
        let vx = self.cov.dot(&x);
        half * self.beta1 * x.dot(&vx) - self.mu.dot(&x) + half * self.beta2 * x.dot(&x)
    }
}

/// How the minimum-return step maps an infeasible point back onto `mu'x >= r_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionVariant {
    /// Rescale along the ray: `x * r_min / mu'x`.
    #[default]
    PaperScaling,
    /// Orthogonal projection onto the half-space.
    EuclideanHalfspace,
}

/// Algorithm hyperparameters. The step size is derived from the problem, not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    /// Budget-constraint penalty; must exceed 4.
    pub rho: T,
    /// Hard-threshold parameter; entries below `sqrt(2 sigma)` are zeroed.
    pub sigma: T,
    /// Stop once `|grad P| < epsilon`.
    pub epsilon: T,
    pub max_iter: usize,
    pub projection_variant: ProjectionVariant,
    /// `false` freezes the multiplier at its initial value.
    pub lambda_update_enabled: bool,
    /// Resolves `x_i == sqrt(2 sigma)` to zero when set, otherwise keeps `x_i`.
    pub tie_break_to_zero: bool,
    /// `false` skips the minimum-return step (pure proximal gradient).
    pub projection_enabled: bool,
}

/// Default threshold parameter `1/(8 n^2)`: prunes positions under half the equal weight.
pub fn default_sigma<T: Scalar>(n: usize) -> T {
    let n = T::of_usize(n.max(1));
    T::one() / (T::lit(8.0) * n * n)
}

impl<T: Scalar> SolverConfig<T> {
    /// Defaults: `rho = 5`, `sigma = 1/(8n^2)`, `epsilon = 1e-7`, 10000 iterations.
    pub fn for_assets(n: usize) -> Self {
        Self {
            rho: T::lit(5.0),
            sigma: default_sigma(n),
            epsilon: T::lit(1e-7),
            max_iter: 10_000,
            projection_variant: ProjectionVariant::PaperScaling,
            lambda_update_enabled: true,
            tie_break_to_zero: true,
            projection_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > T::lit(4.0)) || !self.rho.is_finite() {
            return Err(SepoError::InvalidConfig(format!("rho must exceed 4, got {}", self.rho)));
        }
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(SepoError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.epsilon > T::zero()) {
            return Err(SepoError::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(SepoError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Portfolio weights, one fraction of capital per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T>(pub Array1<T>);

impl<T: Scalar> Weights<T> {
    pub fn equal(n: usize) -> Self {
        Weights(Array1::from_elem(n, T::one() / T::of_usize(n)))
    }

    pub fn nonzero_count(&self) -> usize {
        l0_norm(self.0.view())
    }

    pub fn into_inner(self) -> Array1<T> {
        self.0
    }
}

impl<T> Deref for Weights<T> {
    type Target = Array1<T>;
    fn deref(&self) -> &Array1<T> {
        &self.0
    }
}

impl<T> From<Array1<T>> for Weights<T> {
    fn from(a: Array1<T>) -> Self {
        Weights(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult<T> {
    pub weights: Weights<T>,
    pub lambda_final: T,
    pub iterations: usize,
    pub termination: Termination,
    /// Merit value at the start point and after every iteration.
    pub objective_trace: Vec<T>,
    /// `|x_{k+1} - x_k|^2` for every iteration.
    pub step_trace: Vec<T>,
    /// `|e'x - 1|` at termination.
    pub budget_violation: T,
    /// Distance from `x` to one more full iteration map applied to it.
    pub fixed_point_residual: T,
    /// `|grad P(x, lambda)|` at termination.
    pub gradient_norm: T,
    /// Step size `1 / L` used by the run.
    pub step_size: T,
}

/// Summary statistics of a portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport<T> {
    pub expected_return: T,
    pub variance_risk: T,
    /// Percentage of assets with zero weight.
    pub sparsity_pct: T,
    pub nonzero_count: usize,
    pub budget_violation: T,
    /// `mu'x - r_min`; negative when the return floor is violated.
    pub return_constraint_slack: T,
}

impl<T: Scalar> PortfolioReport<T> {
    pub fn new(problem: &PortfolioProblem<T>, x: ArrayView1<T>) -> Result<Self> {
        problem.check_len("weights", x.len())?;
        let n = problem.n();
        let nonzero_count = l0_norm(x);
        let expected_return = problem.mu().dot(&x);
        Ok(Self {
            expected_return,
            variance_risk: x.dot(&problem.cov().dot(&x)),
            sparsity_pct: T::lit(100.0) * T::of_usize(n - nonzero_count) / T::of_usize(n),
            nonzero_count,
            budget_violation: (x.sum() - T::one()).abs(),
            return_constraint_slack: expected_return - problem.r_min(),
        })
    }
}

/// Number of entries with `|x_i| > ZERO_TOL`.
pub fn l0_norm<T: Scalar>(x: ArrayView1<T>) -> usize {
    let tol = T::lit(ZERO_TOL);
    x.iter().filter(|v| v.abs() > tol).count()
}

/// Smooth part of the augmented Lagrangian:
/// `P(x, lambda) = (b1/2)x'Vx - mu'x + (b2/2)|x|^2 + lambda(e'x - 1) + (rho/2)(e'x - 1)^2`.
pub fn evaluate_smooth<T: Scalar>(problem: &PortfolioProblem<T>, x: ArrayView1<T>, lambda: T, rho: T) -> Result<T> {
    problem.check_len("weights", x.len())?;
    let budget = x.sum() - T::one();
    Ok(problem.mean_variance_part(x) + lambda * budget + T::lit(0.5) * rho * budget * budget)
}

/// Full augmented Lagrangian `P(x, lambda) + |x|_0 + I_R(x)`, with the
/// indicator's `+inf` reported as [`infeasible_merit`].
pub fn evaluate_merit<T: Scalar>(
    problem: &PortfolioProblem<T>,
    x: ArrayView1<T>,
    lambda: T,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    let smooth = evaluate_smooth(problem, x, lambda, cfg.rho)?;
    if problem.mu().dot(&x) < problem.r_min() {
        return Ok(infeasible_merit());
    }
    Ok(smooth + T::of_usize(l0_norm(x)))
}
