use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset, index, and search operations.
#[derive(Debug, Error)]
pub enum Error {
    /// I/O failure, annotated with the path that caused it.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content: bad magic, truncated record, unparsable line.
    #[error("{0}")]
    Format(String),

    /// Invalid argument or configuration value.
    #[error("{0}")]
    Parameter(String),

    /// The dataset checksum recorded in an index file does not match the
    /// dataset presented at load time.
    #[error(
        "index/data mismatch: index records dataset checksum {stored:#018x}, \
         caller provided {provided:#018x}"
    )]
    ChecksumMismatch { stored: u64, provided: u64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(detail: impl Into<String>) -> Self {
        Error::Format(detail.into())
    }

    pub(crate) fn parameter(detail: impl Into<String>) -> Self {
        Error::Parameter(detail.into())
    }

    /// Prefix a format error with the file it came from.
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            Error::Format(detail) => Error::Format(format!("{}: {detail}", path.display())),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
