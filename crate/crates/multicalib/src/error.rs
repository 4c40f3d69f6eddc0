//! Error type shared across the crate.
//!
//! Two broad classes matter to callers: data problems (bad files, shape
//! mismatches, invalid configuration) and numerical failures (covariance
//! matrices that are not positive definite, factorizations that break down).
//! The CLI maps them to distinct exit codes, so the distinction is kept here.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Invalid input data or configuration.
    #[error("{0}")]
    Validation(String),

    /// Shape disagreement between two inputs that must align.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A numerical routine could not produce a trustworthy result.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of numerics rather than of input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
