//! Crate-wide error type and process exit codes.
//!
//! Every fallible API returns [`Result`]. The CLI maps errors to exit codes
//! by category: configuration and validation problems exit with 2, I/O and
//! parsing problems with 3, and numeric failures (NaN loss, divergence)
//! with 4.

use std::path::Path;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or channel shapes that do not fit the requested operation.
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: String,
        expected: String,
        got: String,
    },

    /// Invalid configuration values (negative sizes, unknown variants, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// API or CLI misuse (missing arguments, calling backward on a
    /// non-scalar, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed file contents.
    #[error("parse error in {path} at byte {offset}: {message}")]
    Parse {
        path: String,
        offset: u64,
        message: String,
    },

    /// Underlying I/O failure, annotated with the path involved.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Numeric breakdown: non-finite loss or gradients during training.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn shape(op: &str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            op: op.to_string(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn parse(path: &Path, offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            offset,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for the CLI: 2 config/validation, 3 I/O, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape { .. } | Error::Config(_) | Error::Usage(_) => 2,
            Error::Parse { .. } | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}
