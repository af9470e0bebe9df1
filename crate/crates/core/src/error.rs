use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a named invariant.
    #[error("invalid configuration [{invariant}]: {detail}")]
    InvalidConfig {
        invariant: &'static str,
        detail: String,
    },

    #[error("closed-form spectral factors require n_min = 1 (got n_min = {n_min}); use numeric_svd")]
    UnsupportedClosedForm { n_min: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("weighting is not diagonalized by V: off-diagonal norm {residual:e} exceeds {tolerance:e}")]
    NonDiagonalWeighting { residual: f64, tolerance: f64 },

    #[error("gradient descent diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse config {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn config(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidConfig {
            invariant,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig { .. } | Error::Parse { .. } | Error::InvalidArgument(_) => 2,
            Error::Divergence { .. }
            | Error::UnsupportedClosedForm { .. }
            | Error::ShapeMismatch(_)
            | Error::NonFinite
            | Error::NonDiagonalWeighting { .. } => 3,
            Error::Io { .. } => 4,
        }
    }
}
