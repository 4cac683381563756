use thiserror::Error;

#[derive(Debug, Error)]
pub enum GanError {
    #[error(transparent)]
    Num(#[from] numcore::NumError),

    #[error(transparent)]
    Order(#[from] orderdomain::OrderError),

    #[error(transparent)]
    Data(#[from] dataflow::DataError),

    #[error("non-finite {what} at epoch {epoch}, step {step}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        step: u64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint manifest: {0}")]
    Manifest(String),

    #[error("empty batch")]
    EmptyBatch,
}
