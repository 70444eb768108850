use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] trendweave_core::Error),

    #[error("dangling reference: {0}")]
    Dangling(String),

    #[error("inconsistent store: {0}")]
    Mismatch(String),

    #[error("store layout version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{0}: {1}")]
    Json(String, #[source] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
