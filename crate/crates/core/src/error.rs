//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("catalog slot `{0}` is missing")]
    MissingSlot(&'static str),

    #[error("catalog slot `{0}` given more than once")]
    DuplicateSlot(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("coefficient matrix must be symmetric positive definite")]
    BadCoefficients,

    #[error("Newton failed to converge at step {step}: residual {residual:.3e} after {iters} iterations")]
    NewtonDiverged {
        step: usize,
        residual: f64,
        iters: usize,
    },

    #[error("NaN or Inf detected in {0}")]
    NonFinite(String),

    #[error("step matrix not positive definite at level {level} (pivot {pivot:.3e})")]
    SingularStep { level: usize, pivot: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mixed-constraint derivative g_u vanishes at node {node}, level {level} (|g_u| = {value:.3e})")]
    GuVanishes { node: usize, level: usize, value: f64 },

    #[error("empty sample set: {0}")]
    EmptySample(String),

    #[error("multiplier system infeasible: best stationarity residual {residual:.3e}")]
    MultipliersInfeasible { residual: f64 },

    #[error("brute-force oracle refuses: {0}")]
    OracleRefused(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
