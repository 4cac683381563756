use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty test set")]
    EmptyTestSet,

    #[error("invalid distribution: {0}")]
    BadDistribution(String),

    #[error("metric log {path} line {line}: {detail}")]
    BadLogLine {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("metric log {path}: missing column {column:?}")]
    MissingColumn { path: String, column: String },

    #[error("io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Gan(#[from] gan::GanError),

    #[error(transparent)]
    Order(#[from] orderdomain::OrderError),
}

impl EvalError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
