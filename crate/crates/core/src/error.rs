use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration, map, or parameter.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was invoked out of order, e.g. stepping a finished episode.
    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Non-finite loss or gradient during an update.
    #[error("training error: {0}")]
    Training(String),

    /// Observed trajectory has zero likelihood under every candidate class.
    #[error("evidence error: {0}")]
    Evidence(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
