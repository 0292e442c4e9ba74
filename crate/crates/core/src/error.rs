//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
///
/// Variants are grouped by origin: invalid caller-supplied parameters,
/// malformed serialized artifacts, and I/O failures (which keep the path
/// that failed so callers can report it).
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric or structural argument was outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A serialized artifact (PGM, model container, manifest, config) did
    /// not conform to its format.
    #[error("malformed {format}: {detail}")]
    Malformed {
        /// Short format name, e.g. "pgm" or "model container".
        format: &'static str,
        /// Human-readable description of the violation.
        detail: String,
    },

    /// An I/O operation failed; `path` names the file involved.
    #[error("{path}: {source}")]
    Io {
        /// Path of the file being read or written.
        path: String,
        /// Underlying I/O error.
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Shorthand for an [`Error::InvalidParameter`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Shorthand for an [`Error::Malformed`].
    pub fn malformed(format: &'static str, detail: impl Into<String>) -> Self {
        Error::Malformed {
            format,
            detail: detail.into(),
        }
    }

    /// Wrap an I/O error with the path it occurred on.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error is a missing-file I/O error (used by the CLI to
    /// pick its exit code).
    pub fn is_not_found(&self) -> bool {
        matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
