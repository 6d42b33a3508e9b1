//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by loss evaluation, matching, training, and the
/// gradient-check harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violated a precondition (shape mismatch, non-finite
    /// entries, empty matrix, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value was out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A loss evaluation produced a non-finite value.
    #[error("non-finite value in {context}")]
    NonFinite {
        /// Which computation produced the non-finite value.
        context: String,
    },

    /// The finite-difference oracle hit a non-finite loss while probing a
    /// coordinate.
    #[error("finite-difference probe failed at ({row}, {col}): {detail}")]
    ProbeFailure {
        /// Row of the perturbed coordinate.
        row: usize,
        /// Column of the perturbed coordinate.
        col: usize,
        /// Human-readable description of the failure.
        detail: String,
    },

    /// An optimization run exceeded the divergence guard.
    #[error("optimization diverged: loss reached {loss:e}")]
    Diverged {
        /// The loss value that tripped the guard.
        loss: f64,
    },

    /// Reading or writing an experiment artifact failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
