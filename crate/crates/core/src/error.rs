use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SepoError {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("return projection undefined at nonpositive portfolio return (mu'x = {portfolio_return})")]
    NonpositiveReturn { portfolio_return: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<SepoError>,
    },

    #[error("solver diverged at iteration {iteration}: non-finite iterate")]
    Divergence { iteration: usize },

    #[error("infeasible problem: r_min = {r_min} exceeds the best attainable return {max_return} on the simplex")]
    Infeasible { r_min: f64, max_return: f64 },

    #[error("invalid oracle input: {0}")]
    InvalidOracleInput(String),

    #[error("data error: {0}")]
    Data(#[from] crate::data::DataError),

    #[error("regression error: {0}")]
    Regression(String),
}

pub type Result<T, E = SepoError> = std::result::Result<T, E>;
