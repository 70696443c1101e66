use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model or pipeline configuration (bad dimensions, mismatched
    /// models, digest mismatch).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid argument to an operation (wrong vector length, out-of-range
    /// probability, empty input).
    #[error("input error: {0}")]
    Input(String),

    /// Dataset content that violates a contract (non-binary target,
    /// unparseable cell).
    #[error("data error: {0}")]
    Data(String),

    /// Schema refers to something the data does not contain.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("numerical failure at epoch {epoch}, batch {batch}: {detail}")]
    Numerical {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    /// A metric whose value is not defined on this input (single-class ROC,
    /// empty protected group).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
