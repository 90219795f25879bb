//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model validation, the controller pipeline, the
/// simulator, and file parsing.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had the wrong dimension for the given model.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// A robot model failed validation (non-rigid transform, degenerate yaw
    /// axis, bad joint data, ...).
    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    /// A shaping function or shaping bundle failed validation.
    #[error("invalid shaping: {0}")]
    InvalidShaping(String),

    /// A limit configuration failed validation.
    #[error("invalid limits: {0}")]
    InvalidLimits(String),

    /// A force model failed validation or cannot produce the requested value.
    #[error("invalid force model: {0}")]
    InvalidForceModel(String),

    /// The desired force is outside the range attainable by the force model.
    #[error("desired force {requested} N is outside the attainable range ({detail})")]
    ForceOutOfRange { requested: f64, detail: String },

    /// The QP Hessian failed the positive-definiteness floor.
    #[error("QP Hessian is not positive definite (smallest Cholesky pivot {pivot:e} <= {floor:e})")]
    NotPositiveDefinite { pivot: f64, floor: f64 },

    /// The active-set loop did not terminate within its iteration cap.
    #[error("QP solver exceeded its iteration cap of {cap}")]
    SolverIterationLimit { cap: usize },

    /// A precondition of an analysis routine was not met.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A scenario, robot, or trajectory file could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenient result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
