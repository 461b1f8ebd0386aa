//! Augmented-Lagrangian proximal-gradient loop and its no-threshold baseline.
//!
//! Each iteration takes a gradient step on the smooth part `P(x, lambda)`
//! with the fixed step `1/L` (see [`lipschitz_estimate`]), hard-thresholds
//! the result, maps it back onto the minimum-return half-space and then
//! moves the budget multiplier: `lambda += rho (e'x - 1)`. The run stops
//! when `|grad P(x, lambda)| < epsilon` or after `max_iter` iterations.

use ndarray::{Array1, ArrayView1};

use crate::error::{Result, SepoError};
use crate::model::{evaluate_merit, PortfolioProblem, SolverConfig, SolverResult, Termination, Weights};
use crate::proximal::{grad_smooth, lipschitz_estimate, project_return, prox_l0};
use crate::scalar::Scalar;

/// Which non-smooth step follows the gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shrink {
    HardThreshold,
    Identity,
}

/// Sparse solve from `x0` (equal weights when `None`) with `lambda0 = 0`.
pub fn solve_sepo<T: Scalar>(
    problem: &PortfolioProblem<T>,
    cfg: &SolverConfig<T>,
    x0: Option<&Weights<T>>,
) -> Result<SolverResult<T>> {
    run(problem, cfg, x0, Shrink::HardThreshold)
}

/// Same loop with the thresholding step replaced by the identity, i.e. plain
/// mean-variance with the same constraints and step size. Nothing forces the
/// iterates to stay nonnegative here.
pub fn solve_mvo_baseline<T: Scalar>(
    problem: &PortfolioProblem<T>,
    cfg: &SolverConfig<T>,
    x0: Option<&Weights<T>>,
) -> Result<SolverResult<T>> {
    run(problem, cfg, x0, Shrink::Identity)
}

struct Stepper<'a, T: Scalar> {
    problem: &'a PortfolioProblem<T>,
    cfg: &'a SolverConfig<T>,
    alpha: T,
    shrink: Shrink,
}

impl<T: Scalar> Stepper<'_, T> {
    /// Gradient step plus shrink, before the return projection.
    fn prox_step(&self, x: ArrayView1<T>, lambda: T) -> Result<Array1<T>> {
        let g = grad_smooth(self.problem, x, lambda, self.cfg.rho)?;
        let mut z = x.to_owned();
        z.scaled_add(-self.alpha, &g);
        match self.shrink {
            Shrink::HardThreshold => prox_l0(z.view(), self.cfg.sigma, self.cfg.tie_break_to_zero),
            Shrink::Identity => Ok(z),
        }
    }

    fn project(&self, x: Array1<T>) -> Result<Array1<T>> {
        if !self.cfg.projection_enabled {
            return Ok(x);
        }
        project_return(x.view(), self.problem.mu().view(), self.problem.r_min(), self.cfg.projection_variant)
    }

    fn step(&self, x: ArrayView1<T>, lambda: T) -> Result<Array1<T>> {
        let x_hat = self.prox_step(x, lambda)?;
        self.project(x_hat)
    }
}

fn run<T: Scalar>(
    problem: &PortfolioProblem<T>,
    cfg: &SolverConfig<T>,
    x0: Option<&Weights<T>>,
    shrink: Shrink,
) -> Result<SolverResult<T>> {
    cfg.validate()?;
    let n = problem.n();
    let mut x = match x0 {
        Some(w) => {
            problem.check_len("initial weights", w.len())?;
            if w.iter().any(|v| !v.is_finite()) {
                return Err(SepoError::InvalidConfig("initial weights must be finite".into()));
            }
            w.0.clone()
        }
        None => Weights::<T>::equal(n).into_inner(),
    };
    let mut lambda = T::zero();
    let alpha = T::one() / lipschitz_estimate(problem, cfg.rho);
    let stepper = Stepper { problem, cfg, alpha, shrink };

    let mut trace = Vec::with_capacity(cfg.max_iter.min(1 << 16) + 1);
    trace.push(evaluate_merit(problem, x.view(), lambda, cfg)?);
    let mut steps = Vec::with_capacity(trace.capacity());

    let mut iterations = 0;
    let mut termination = Termination::IterationCap;
    let mut grad_norm = T::infinity();
    while iterations < cfg.max_iter {
        let at = |source| SepoError::AtIteration { iteration: iterations, source: Box::new(source) };
        let x_next = stepper.step(x.view(), lambda).map_err(at)?;
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(SepoError::Divergence { iteration: iterations });
        }
        if cfg.lambda_update_enabled {
            lambda += cfg.rho * (x_next.sum() - T::one());
            if !lambda.is_finite() {
                return Err(SepoError::Divergence { iteration: iterations });
            }
        }
        let dx = &x_next - &x;
        steps.push(dx.dot(&dx));
        x = x_next;
        iterations += 1;
        trace.push(evaluate_merit(problem, x.view(), lambda, cfg)?);

        let g = grad_smooth(problem, x.view(), lambda, cfg.rho)?;
        grad_norm = g.dot(&g).sqrt();
        if grad_norm < cfg.epsilon {
            termination = Termination::GradientTolerance;
            break;
        }
    }
    if iterations == 0 || !grad_norm.is_finite() {
        let g = grad_smooth(problem, x.view(), lambda, cfg.rho)?;
        grad_norm = g.dot(&g).sqrt();
    }

    let fixed_point_residual = fixed_point_residual(&stepper, x.view(), lambda)?;
    Ok(SolverResult {
        budget_violation: (x.sum() - T::one()).abs(),
        weights: Weights(x),
        lambda_final: lambda,
        iterations,
        termination,
        objective_trace: trace,
        step_trace: steps,
        fixed_point_residual,
        gradient_norm: grad_norm,
        step_size: alpha,
    })
}

/// `|x - step(x)|`. Falls back to the distance to the unprojected step when the
/// projection is undefined there.
fn fixed_point_residual<T: Scalar>(stepper: &Stepper<'_, T>, x: ArrayView1<T>, lambda: T) -> Result<T> {
    let x_hat = stepper.prox_step(x, lambda)?;
    let next = stepper.project(x_hat.clone()).unwrap_or(x_hat);
    let d = &x - &next;
    Ok(d.dot(&d).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate_smooth, ProjectionVariant};
    use ndarray::{array, Array2};

    fn one_asset() -> PortfolioProblem<f64> {
        PortfolioProblem::new(array![0.5], array![[1.0]], 1.0, 1.0, 0.1).unwrap()
    }

    fn one_asset_cfg() -> SolverConfig<f64> {
        SolverConfig { sigma: 1e-4, ..SolverConfig::for_assets(1) }
    }

    #[test]
    fn single_asset_matches_grid_minimizer() {
        let p = one_asset();
        let cfg = one_asset_cfg();
        let res = solve_sepo(&p, &cfg, None).unwrap();
        // oracle: minimize P(., lambda_final) over the feasible part of [0, 2] on a 1e-6 grid
        let steps = 2_000_000usize;
        let (mut best_x, mut best_v) = (f64::NAN, f64::INFINITY);
        for k in 0..=steps {
            let x = 2.0 * k as f64 / steps as f64;
            if 0.5 * x < 0.1 {
                continue;
            }
            let v = evaluate_smooth(&p, array![x].view(), res.lambda_final, cfg.rho).unwrap();
            if v < best_v {
                best_v = v;
                best_x = x;
            }
        }
        assert!((res.weights[0] - best_x).abs() < 1e-2, "{} vs {}", res.weights[0], best_x);
        assert!((res.weights[0] - 1.0).abs() < 1e-2);
        assert_eq!(res.termination, Termination::GradientTolerance);
    }

    #[test]
    fn symmetric_pair_stays_symmetric() {
        let p = PortfolioProblem::<f64>::new(array![0.3, 0.3], Array2::eye(2), 1.0, 1.0, 0.1).unwrap();
        let res = solve_sepo(&p, &SolverConfig::for_assets(2), None).unwrap();
        assert!((res.weights[0] - res.weights[1]).abs() <= 1e-8);
    }

    #[test]
    fn baseline_and_sparse_agree_when_threshold_inert() {
        let p = one_asset();
        let cfg = SolverConfig { sigma: 1e-13, ..one_asset_cfg() };
        let a = solve_sepo(&p, &cfg, None).unwrap();
        let b = solve_mvo_baseline(&p, &cfg, None).unwrap();
        assert!((a.weights[0] - b.weights[0]).abs() < 1e-6);
    }

    #[test]
    fn trace_and_iteration_bookkeeping() {
        let p = PortfolioProblem::new(array![0.2, 0.4, 0.1], Array2::eye(3) * 0.5, 0.5, 1.0, 0.1).unwrap();
        let cfg = SolverConfig { max_iter: 7, ..SolverConfig::for_assets(3) };
        let res = solve_sepo(&p, &cfg, None).unwrap();
        assert_eq!(res.iterations, 7);
        assert_eq!(res.termination, Termination::IterationCap);
        assert_eq!(res.objective_trace.len(), 8);
        assert_eq!(res.step_trace.len(), 7);
        assert!(res.step_size > 0.0);
    }

    #[test]
    fn fixed_lambda_run_keeps_multiplier() {
        let p = PortfolioProblem::new(array![0.2, 0.4], Array2::eye(2), 0.5, 1.0, 0.1).unwrap();
        let cfg = SolverConfig { lambda_update_enabled: false, max_iter: 50, ..SolverConfig::for_assets(2) };
        let res = solve_sepo(&p, &cfg, None).unwrap();
        assert_eq!(res.lambda_final, 0.0);
    }

    #[test]
    fn nonpositive_return_error_carries_iteration() {
        // negative means everywhere except one tiny asset: the first step drives mu'x below zero
        let p = PortfolioProblem::new(array![-0.5, -0.5, 0.01], Array2::eye(3), 1.0, 1.0, 0.01).unwrap();
        let cfg = SolverConfig { sigma: 0.4, ..SolverConfig::for_assets(3) };
        let err = solve_sepo(&p, &cfg, None).unwrap_err();
        match err {
            SepoError::AtIteration { iteration, source } => {
                assert_eq!(iteration, 0);
                assert!(matches!(*source, SepoError::NonpositiveReturn { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = one_asset();
        let cfg = SolverConfig { rho: 3.0, ..one_asset_cfg() };
        assert!(matches!(solve_sepo(&p, &cfg, None), Err(SepoError::InvalidConfig(_))));
        let x0 = Weights(array![0.5, 0.5]);
        assert!(matches!(solve_sepo(&p, &one_asset_cfg(), Some(&x0)), Err(SepoError::DimensionMismatch { .. })));
        let x0 = Weights(array![f64::NAN]);
        assert!(solve_sepo(&p, &one_asset_cfg(), Some(&x0)).is_err());
    }

    #[test]
    fn euclidean_variant_final_point_is_feasible() {
        let p = PortfolioProblem::new(array![0.05, 0.5, 0.1, 0.3], Array2::eye(4) * 0.2, 1.0, 1.0, 0.35).unwrap();
        let cfg =
            SolverConfig { projection_variant: ProjectionVariant::EuclideanHalfspace, ..SolverConfig::for_assets(4) };
        let res = solve_sepo(&p, &cfg, None).unwrap();
        assert!(p.mu().dot(&res.weights.0) >= 0.35 - 1e-12);
    }

    #[test]
    fn deterministic() {
        let p = PortfolioProblem::new(array![0.2, 0.4, 0.1], Array2::eye(3) * 0.5, 0.5, 1.0, 0.1).unwrap();
        let cfg = SolverConfig::for_assets(3);
        assert_eq!(solve_sepo(&p, &cfg, None).unwrap(), solve_sepo(&p, &cfg, None).unwrap());
    }

    #[test]
    fn runs_in_single_precision() {
        let p = PortfolioProblem::<f32>::new(array![0.5], array![[1.0]], 1.0, 1.0, 0.1).unwrap();
        let cfg = SolverConfig { sigma: 1e-4, epsilon: 1e-5, ..SolverConfig::for_assets(1) };
        let res = solve_sepo(&p, &cfg, None).unwrap();
        assert!((res.weights[0] - 1.0).abs() < 1e-3);
    }
}
