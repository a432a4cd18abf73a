//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input (dimensions, empty grids, bad parameters).
    #[error("input error: {0}")]
    Input(String),

    /// Inconsistent configuration (unknown penalty name, missing subgradient, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine did not reach its target accuracy.
    #[error("numerical error: {message} (achieved {achieved:e})")]
    Numerical { message: String, achieved: f64 },

    /// A proven invariant was violated during a run.
    #[error("invariant failure at round {round}: {message}")]
    Invariant { round: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
