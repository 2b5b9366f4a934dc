use thiserror::Error;

/// Errors surfaced by the library.
///
/// Monte Carlo overflow is deliberately *not* an error: it is an expected
/// event counted per trajectory (see [`crate::drift::OverflowFailure`]).
#[derive(Debug, Error)]
pub enum SsbError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature did not converge: last two estimates {prev} and {last}")]
    QuadratureNonConvergence { prev: f64, last: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last Hilbert distance {last_distance:.3e})")]
    NonConvergence {
        iterations: usize,
        last_distance: f64,
        trace: Vec<f64>,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("rejection envelope violated at x = {point:?}: log target {log_target} > log bound {log_bound}")]
    EnvelopeViolation {
        point: Vec<f64>,
        log_target: f64,
        log_bound: f64,
    },
}

impl SsbError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SsbError::InvalidInput(msg.into())
    }
}
