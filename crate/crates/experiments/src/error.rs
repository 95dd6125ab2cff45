use std::path::PathBuf;

use pinball_core::MapError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("usage error for `{key}`: {message}")]
    Usage { key: String, message: String },
    #[error("{experiment} failed at {cell}: {source}")]
    Runtime {
        experiment: &'static str,
        cell: String,
        #[source]
        source: MapError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExpError {
    pub fn usage(key: impl Into<String>, message: impl Into<String>) -> Self {
        ExpError::Usage {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process status for this error: 2 for bad input, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Usage { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExpError>;

/// Attaches experiment and cell context to a core error.
pub(crate) trait Context<T> {
    fn cell(self, experiment: &'static str, cell: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, MapError> {
    fn cell(self, experiment: &'static str, cell: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| ExpError::Runtime {
            experiment,
            cell: cell(),
            source,
        })
    }
}
