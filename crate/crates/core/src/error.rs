use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation, complexity and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    /// A bound was requested outside the range where it holds.
    #[error("outside the domain of {bound}: {reason}")]
    Domain { bound: &'static str, reason: String },

    /// The user's quantity returned NaN or an infinity.
    #[error("q evaluation returned non-finite value {value} at level {level}, record {index}")]
    NonFiniteQ {
        level: usize,
        index: usize,
        value: f64,
    },

    /// A verification suite was configured so that its statistics are meaningless.
    #[error("suite configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }
}
