//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step} (loss {loss}); last valid point retained")]
    Diverged {
        step: usize,
        loss: f64,
        /// Partial trajectory recorded up to the last valid point.
        partial: Box<crate::nn::Trajectory>,
    },

    #[error("conjugate gradient did not converge within {iterations} iterations (relative residual {residual})")]
    CgDidNotConverge { iterations: usize, residual: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
