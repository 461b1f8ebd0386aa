//! beta1 sweeps comparing the sparse solver with the baseline, and per-response
//! univariate OLS of the results on beta1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ReturnsDataset;
use crate::error::{Result, SepoError};
use crate::model::{PortfolioReport, SolverConfig, SolverResult, Termination};
use crate::solver::{solve_mvo_baseline, solve_sepo};

/// Per-run diagnostics kept alongside each report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub iterations: usize,
    pub termination: Termination,
    pub lambda_final: f64,
    pub budget_violation: f64,
    pub fixed_point_residual: f64,
    pub gradient_norm: f64,
}

impl From<&SolverResult<f64>> for RunDiagnostics {
    fn from(r: &SolverResult<f64>) -> Self {
        Self {
            iterations: r.iterations,
            termination: r.termination,
            lambda_final: r.lambda_final,
            budget_violation: r.budget_violation,
            fixed_point_residual: r.fixed_point_residual,
            gradient_norm: r.gradient_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRowResult {
    pub sepo: PortfolioReport<f64>,
    pub mvo: PortfolioReport<f64>,
    pub sepo_diagnostics: RunDiagnostics,
    pub mvo_diagnostics: RunDiagnostics,
    /// Final weights of the sparse run, asset order as in the dataset.
    pub sepo_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta1: f64,
    /// `Err` carries the message of whichever solve failed.
    pub outcome: std::result::Result<SweepRowResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn successful(&self) -> impl Iterator<Item = (f64, &SweepRowResult)> {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok().map(|ok| (r.beta1, ok)))
    }

    pub fn failed_count(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Runs both solvers from equal weights at every beta1. A failing beta1 is
/// recorded on its row; the remaining rows still run.
///
/// Rows are independent; they are evaluated on the current rayon pool and
/// assembled in grid order.
pub fn run_sweep(
    dataset: &ReturnsDataset,
    beta1_grid: &[f64],
    beta2: f64,
    r_min: f64,
    cfg: &SolverConfig<f64>,
) -> Result<SweepResult> {
    if beta1_grid.is_empty() {
        return Err(SepoError::InvalidConfig("beta1 grid is empty".into()));
    }
    if let Some(b) = beta1_grid.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
        return Err(SepoError::InvalidConfig(format!("beta1 values must be positive, got {b}")));
    }
    if beta1_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SepoError::InvalidConfig("beta1 grid must be strictly increasing".into()));
    }
    cfg.validate()?;
    let rows = beta1_grid
        .par_iter()
        .map(|&beta1| SweepRow {
            beta1,
            outcome: sweep_row(dataset, beta1, beta2, r_min, cfg).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(SweepResult { rows })
}

fn sweep_row(
    dataset: &ReturnsDataset,
    beta1: f64,
    beta2: f64,
    r_min: f64,
    cfg: &SolverConfig<f64>,
) -> Result<SweepRowResult> {
    let problem = dataset.problem(beta1, beta2, r_min)?;
    let sepo = solve_sepo(&problem, cfg, None)?;
    let mvo = solve_mvo_baseline(&problem, cfg, None)?;
    Ok(SweepRowResult {
        sepo: PortfolioReport::new(&problem, sepo.weights.view())?,
        mvo: PortfolioReport::new(&problem, mvo.weights.view())?,
        sepo_diagnostics: (&sepo).into(),
        mvo_diagnostics: (&mvo).into(),
        sepo_weights: sepo.weights.to_vec(),
    })
}

/// Response variables regressed on beta1 (sparse-solver results).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    ExpectedReturn,
    VarianceRisk,
    /// Fraction of zero weights in `[0, 1]`.
    Sparsity,
}

impl Response {
    pub const ALL: [Response; 3] = [Response::ExpectedReturn, Response::VarianceRisk, Response::Sparsity];

    pub fn name(self) -> &'static str {
        match self {
            Response::ExpectedReturn => "expected_return",
            Response::VarianceRisk => "variance_risk",
            Response::Sparsity => "sparsity",
        }
    }

    fn extract(self, report: &PortfolioReport<f64>) -> f64 {
        match self {
            Response::ExpectedReturn => report.expected_return,
            Response::VarianceRisk => report.variance_risk,
            Response::Sparsity => report.sparsity_pct / 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub intercept: f64,
    pub slope: f64,
    pub slope_std_error: f64,
    /// Two-sided, Student t with `n_obs - 2` degrees of freedom.
    pub slope_p_value: f64,
    pub r_squared: f64,
    pub n_obs: usize,
    /// Failed sweep rows left out of the fit.
    pub excluded_rows: usize,
}

/// OLS of one response on beta1 over the successful sweep rows.
pub fn regress_on_beta1(sweep: &SweepResult, response: Response) -> Result<RegressionSummary> {
    let (x, y): (Vec<f64>, Vec<f64>) = sweep.successful().map(|(b, row)| (b, response.extract(&row.sepo))).unzip();
    let mut summary = ols_fit(&x, &y)?;
    summary.excluded_rows = sweep.failed_count();
    Ok(summary)
}

/// Simple linear regression `y = a + b x` with a t-test on the slope.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionSummary> {
    if x.len() != y.len() {
        return Err(SepoError::Regression(format!("{} regressors for {} responses", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(SepoError::Regression(format!("need at least 3 observations, got {n}")));
    }
    let nf = n as f64;
    let x_mean = x.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(SepoError::Regression("degenerate design: all beta1 values equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - x_mean) * (b - y_mean)).sum();
    let syy: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let df = nf - 2.0;
    let slope_std_error = (sse / df / sxx).sqrt();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 0.0 };
    let slope_p_value = if slope_std_error > 0.0 {
        student_t_two_sided_p(slope / slope_std_error, df)
    } else if slope == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(RegressionSummary { intercept, slope, slope_std_error, slope_p_value, r_squared, n_obs: n, excluded_rows: 0 })
}

/// `P(|T| >= |t|)` for Student t with `df` degrees of freedom, via
/// `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5).clamp(0.0, 1.0)
}

/// `I_x(a, b)` by the continued fraction, using the symmetry relation to stay
/// in its fast-converging region.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_TERMS: usize = 500;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_TERMS {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-15 for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
