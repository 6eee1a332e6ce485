use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by histcal.
///
/// Variants fall in two families: input/validation problems (bad data,
/// unmet preconditions, I/O) and numeric failures (non-finite results,
/// non-convergence). [`Error::is_numeric`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),

    #[error("invalid label histogram: {0}")]
    InvalidHistogram(String),

    #[error("invalid binning scheme: {0}")]
    InvalidBinning(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("record `{id}`: {reason}")]
    Record { id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Error attributed to one record.
    pub fn record(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Record {
            id: id.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}
