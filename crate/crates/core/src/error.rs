use std::path::PathBuf;

use thiserror::Error;

use crate::memory::MemoryReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{kind} index {index} out of range (size {size})")]
    OutOfBounds {
        kind: &'static str,
        index: usize,
        size: usize,
    },

    #[error("dimension mismatch: checkpoint has {checkpoint}, corpus has {corpus}")]
    DimensionMismatch { checkpoint: String, corpus: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("memory filter kept no users ({} users analysed)", report.users.len())]
    FilteredEmpty { report: Box<MemoryReport> },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
