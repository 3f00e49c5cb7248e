use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite integrand value {value} at node {index} (x = {x})")]
    NonFinite { index: usize, x: f64, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation window too narrow: boundary density ratio {ratio:e} exceeds {limit:e}")]
    Truncation { ratio: f64, limit: f64 },

    #[error("grid too coarse: spacing {dx:e} exceeds {max_dx:e} needed to resolve the oscillation")]
    GridTooCoarse { dx: f64, max_dx: f64 },

    #[error("trajectory blew up at step {step}")]
    BlowUp { step: usize },

    #[error("time step {dt:e} violates the stability rule (must be below {limit:e})")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("infeasible starting point: {0}")]
    Infeasible(String),

    #[error("Poisson solve: inner integral ends at {residual:e}, expected zero")]
    Centering { residual: f64 },

    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },

    #[error("malformed trajectory file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
