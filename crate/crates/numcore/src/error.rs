use thiserror::Error;

/// Errors raised by tensor construction, graph operations, optimizer steps,
/// and checkpoint IO.
#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid shape in {context}: {detail}")]
    InvalidShape {
        context: &'static str,
        detail: String,
    },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("parameter {0:?} already registered")]
    DuplicateParam(String),

    #[error("unknown parameter {0:?}")]
    UnknownParam(String),

    #[error("parameter {name:?} shape is immutable: expected {expected:?}, got {actual:?}")]
    ShapeImmutable {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),

    #[error("corrupt checkpoint: {detail}")]
    Corrupt { detail: String },

    #[error("checkpoint dtype mismatch: file holds {found}, build expects {expected}")]
    DtypeMismatch {
        found: &'static str,
        expected: &'static str,
    },
}

impl NumError {
    pub(crate) fn shapes(
        context: &'static str,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        NumError::ShapeMismatch {
            context,
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }
}
