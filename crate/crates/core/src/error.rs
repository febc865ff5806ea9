use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix is not symmetric (max |M_ij - M_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("{what} is singular or ill-conditioned (smallest singular value {smallest_singular_value:e})")]
    Singular {
        what: &'static str,
        smallest_singular_value: f64,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("training diverged at step {step}: {reason} (loss {loss:e})")]
    Divergence {
        step: usize,
        loss: f64,
        reason: &'static str,
    },

    #[error("solver did not converge after {iters} iterations (max KKT violation {max_violation:e})")]
    NonConvergence { iters: usize, max_violation: f64 },

    #[error("block {index}: {source}")]
    Block {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
