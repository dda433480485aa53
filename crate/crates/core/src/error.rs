use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("solver diverged at step {step}: Picard iteration did not converge in {iterations} sweeps (last change {last_change:.3e} K)")]
    SolverDivergence {
        step: usize,
        iterations: usize,
        last_change: f64,
    },

    #[error("domain error in thermocouple {tc}, time index {index}: {message}")]
    Domain {
        tc: String,
        index: usize,
        message: String,
    },

    #[error("surrogate fit failed: degenerate design matrix for basis of size {basis_size}")]
    DegenerateDesign { basis_size: usize },

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("evidence underflow: every one of {n_mc} draws has zero likelihood; increase the draw count or temper the likelihood")]
    EvidenceUnderflow { n_mc: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {path} at row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that come out of numerical work (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverDivergence { .. }
                | Error::Domain { .. }
                | Error::DegenerateDesign { .. }
                | Error::DegenerateDistribution(_)
                | Error::EvidenceUnderflow { .. }
        )
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::InvalidArgument(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
