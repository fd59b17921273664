use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("off-diagonal product is not positive at index {index} (value {product})")]
    NotSymmetrizable { index: usize, product: f64 },

    #[error("rejection sampling exceeded {limit} attempts at index {index}")]
    RejectionLimit { index: usize, limit: usize },

    #[error("enumeration too large: {size} exceeds guard {guard}")]
    GuardExceeded { size: f64, guard: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("noise field too short: path reaches level {level}, field covers [0, {extent})")]
    FieldTooShort { level: f64, extent: f64 },

    #[error("sample too small: {got} points, need at least {need}")]
    SampleTooSmall { got: usize, need: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
