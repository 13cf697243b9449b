use thiserror::Error;

/// Errors raised by the laboratory's numeric and data modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{op}: matrix must be square, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("{op}: starting vector is zero")]
    ZeroVector { op: &'static str },

    #[error("{op}: matrix is singular to working precision")]
    Singular { op: &'static str },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("non-finite gradient signal at scoring step {t}, transported to step {k}")]
    NonFiniteGradient { t: usize, k: usize },

    #[error("invalid step indices: {0}")]
    InvalidStep(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(op: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
