use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series of length {len} is too short: {needed} samples required ({context})")]
    SeriesTooShort {
        len: usize,
        needed: usize,
        context: String,
    },

    #[error("AR parameters are not stable (largest pole modulus {max_modulus:.6})")]
    Unstable { max_modulus: f64 },

    #[error("design matrix is rank deficient for order {order}; try a lower model order")]
    RankDeficient { order: usize },

    #[error("symmetric factorization failed after trying jitter levels {jitters:?}")]
    Factorization { jitters: Vec<f64> },

    #[error(
        "PSD denominator vanishes at frequency {frequency} cycles/sample (pole on the unit circle)"
    )]
    Pole { frequency: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than from the
    /// caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::Factorization { .. }
                | Error::Pole { .. }
                | Error::Numerical(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
