use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across model construction, fitting, fixed-point solving
/// and result persistence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("transition matrix construction failed after {attempts} draws (spectral radius vanished)")]
    Construction { attempts: usize },

    #[error("stationary covariance series diverges: spectral radius {spectral_radius} >= 1")]
    Divergence { spectral_radius: f64 },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("no sign change found for {what} after {doublings} bracket doublings")]
    BracketExpansion { what: &'static str, doublings: usize },

    #[error("{what} did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("near-singular {what}: magnitude {value:e}")]
    NearSingular { what: &'static str, value: f64 },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
