use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("metadata sidecar {path} line {line}: {detail}")]
    Meta {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("bad csv header: expected {expected:?}, got {got:?}")]
    Header { expected: String, got: String },

    #[error("row {row}, field {field}: {detail}")]
    Row {
        row: usize,
        field: &'static str,
        detail: String,
    },

    #[error("sequence must be strictly increasing at row {row}")]
    SequenceOrder { row: usize },

    #[error("empty stream: at least {min} rows are needed for one window")]
    EmptyStream { min: usize },

    #[error("stream too short: need at least {needed} rows, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("config key {key:?}: {detail}")]
    Config { key: String, detail: String },

    #[error("distribution table for state {state:?}: {detail}")]
    Distribution { state: String, detail: String },

    #[error(transparent)]
    Order(#[from] orderdomain::OrderError),
}

impl DataError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
