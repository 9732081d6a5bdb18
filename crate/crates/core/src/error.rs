//! Error type shared by all modules.

use thiserror::Error;

/// Errors reported by the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (dimension mismatch,
    /// out-of-range index, invalid physical parameter, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The adaptive integrator could not continue (step-size underflow).
    #[error("integration failure at t = {time} μs: {message}")]
    IntegrationFailure { time: f64, message: String },

    /// A trajectory violated a density-matrix invariant beyond 10x its
    /// tolerance.
    #[error("numerical instability at t = {time} μs: {message}")]
    NumericalInstability { time: f64, message: String },

    /// The requested operation is not supported for these inputs.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Degenerate input left an operation without a well-defined answer.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Every candidate evaluation inside an optimization failed.
    #[error("optimization failure: {0}")]
    OptimizationFailure(String),

    /// An iterative numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
