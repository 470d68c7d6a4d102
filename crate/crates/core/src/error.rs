//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WolffError {
    /// A parameter bundle violates one of its structural invariants
    /// (exponent ranges, ordering of orders, dimension limits).
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// A measure representation violates its invariants (negative weight,
    /// non-monotone cumulative mass, shape mismatch).
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// The requested operation is not defined for this measure representation.
    #[error("unsupported operation for this measure representation: {0}")]
    Unsupported(String),

    /// A grid is too coarse for the requested operation.
    #[error("grid under-resolved: {0}")]
    UnderResolved(String),

    /// Two fields do not live on the same sample set.
    #[error("mismatched sample sets: {0}")]
    MismatchedSamples(String),

    /// A solver ran out of budget before reaching a usable state.
    #[error("solver budget exhausted: {0}")]
    BudgetExhausted(String),

    /// A bisection bracket does not actually bracket the sought transition.
    #[error("invalid bracket: {0}")]
    InvalidBracket(String),

    /// I/O or config-file parse failure, with the offending field when known.
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WolffError>;

impl WolffError {
    pub fn invalid_param(field: &'static str, reason: impl Into<String>) -> Self {
        WolffError::InvalidParameter { field, reason: reason.into() }
    }
}
