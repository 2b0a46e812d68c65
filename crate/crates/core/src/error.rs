use thiserror::Error;

pub type Result<T> = std::result::Result<T, MindsError>;

#[derive(Debug, Error)]
pub enum MindsError {
    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} index {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("numerical failure at iteration {iteration} in step {step}: {message}")]
    Numerical {
        iteration: usize,
        step: &'static str,
        message: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("chain has {0} retained draws, at least 2 are required")]
    EmptyChain(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MindsError {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            MindsError::Domain(_) => "domain",
            MindsError::Dimension(_) => "dimension",
            MindsError::Index { .. } => "index",
            MindsError::Config(_) => "config",
            MindsError::Ingest { .. } => "ingest",
            MindsError::Numerical { .. } => "numerical",
            MindsError::Degenerate(_) => "degenerate",
            MindsError::EmptyChain(_) => "empty_chain",
            MindsError::Io(_) => "io",
            MindsError::Json(_) => "json",
            MindsError::Csv(_) => "csv",
        }
    }
}
