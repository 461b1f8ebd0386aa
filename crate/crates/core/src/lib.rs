//! Sparse mean-variance portfolio selection.
//!
//! Minimizes `(b1/2)x'Vx - mu'x + (b2/2)|x|^2 + |x|_0` subject to a return
//! floor `mu'x >= r`, full investment `e'x = 1` and `x >= 0`, using an
//! augmented-Lagrangian proximal-gradient loop with hard thresholding.
//!
//! The numerical core ([`model`], [`proximal`], [`solver`], [`oracle`]) is
//! generic over [`Scalar`]; the aliases below fix it to `f64` (or `f32`).
//! Data ingestion and the sweep/regression tooling work in `f64`.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod data;
pub mod error;
pub mod model;
pub mod oracle;
pub mod proximal;
pub mod scalar;
pub mod solver;

pub use error::{Result, SepoError};
pub use model::{
    evaluate_merit, evaluate_smooth, PortfolioProblem, PortfolioReport, ProjectionVariant, SolverConfig, SolverResult,
    Termination, Weights,
};
pub use oracle::{oracle_solve, OracleSolution};
pub use proximal::{grad_smooth, lipschitz_estimate, project_return, prox_l0};
pub use scalar::Scalar;
pub use solver::{solve_mvo_baseline, solve_sepo};

pub type Problem = PortfolioProblem<f64>;
pub type Config = SolverConfig<f64>;
pub type Solution = SolverResult<f64>;
pub type Report = PortfolioReport<f64>;

pub type Problem32 = PortfolioProblem<f32>;
pub type Config32 = SolverConfig<f32>;
pub type Solution32 = SolverResult<f32>;
pub type Report32 = PortfolioReport<f32>;
