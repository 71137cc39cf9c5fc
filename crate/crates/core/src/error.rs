use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants are grouped by [`ErrorKind`], which front-ends map onto stable
/// exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("sentence alignment error: {0}")]
    Alignment(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Divergence,
    Checkpoint,
    Alignment,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::EmptyCorpus
            | Error::Index(_)
            | Error::Io { .. }
            | Error::Json(_) => ErrorKind::Data,
            Error::Divergence { .. } => ErrorKind::Divergence,
            Error::Checkpoint(_) => ErrorKind::Checkpoint,
            Error::Alignment(_) => ErrorKind::Alignment,
            Error::Shape(_) | Error::Numeric(_) | Error::Contract(_) => ErrorKind::Internal,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
