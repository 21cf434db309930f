//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library and mapped to process exit codes by the CLI
/// (config errors exit with 2, numerical failures with 3).
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Two pattern points fell into the same raster pixel.
    #[error("pixel collision at ({row}, {col})")]
    Collision { row: usize, col: usize },

    /// A vector or matrix had the wrong dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A computation produced a non-finite value or failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed serialized data.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
