use thiserror::Error;

/// Errors raised by operators, estimators and the structured-matrix code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator does not support {0}")]
    CapabilityMissing(&'static str),

    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operator is not symmetric")]
    NotSymmetric,

    #[error("quadrature node {min_node:e} outside the domain of f")]
    Domain { min_node: f64 },

    #[error("probe block is rank deficient after {attempts} draws")]
    RankDeficient { attempts: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular {what} at level {level}, block {block}")]
    Singular {
        what: &'static str,
        level: usize,
        block: usize,
    },

    #[error("all {blocks} sampled subblocks were singular")]
    AllBlocksSingular { blocks: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> TraceError {
    TraceError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
