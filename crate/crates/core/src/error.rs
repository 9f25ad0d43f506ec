//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the physical or mathematical domain of an
    /// operation (negative distance, non-positive slew rate, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure failed to reach its accuracy or convergence
    /// target. The message carries diagnostics (tolerances, iteration
    /// counts, residuals).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Invalid run configuration (unknown keys, missing fields, values
    /// outside their allowed ranges).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed dataset contents (bad CSV rows, schema mismatches).
    #[error("dataset error: {0}")]
    Dataset(String),

    /// An I/O failure, annotated with what was being read or written.
    #[error("i/o error ({context}): {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn dataset(msg: impl Into<String>) -> Self {
        Error::Dataset(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
