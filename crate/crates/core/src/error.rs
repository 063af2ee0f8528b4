use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid statistics: {0}")]
    InvalidStats(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("invalid subchain: {0}")]
    InvalidSubchain(String),

    #[error("invalid variational state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("invalid train/test split: {0}")]
    InvalidSplit(String),

    #[error("token {token} is outside the vocabulary of size {vocab_size}")]
    Vocabulary { token: usize, vocab_size: usize },

    #[error("all-zero message at position {position}")]
    DegenerateMessage { position: usize },

    #[error("zero normalizer for marginal at position {position}")]
    DegeneratePosterior { position: usize },

    #[error("power iteration did not converge in {iterations} iterations (L1 residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("non-finite {what} at iteration {iteration}{}", subchain.map(|n| format!(", subchain {n}")).unwrap_or_default())]
    NonFinite {
        what: &'static str,
        iteration: u64,
        subchain: Option<usize>,
    },

    #[error("{}: corrupt artifact: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },

    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by the numerics rather than by inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateMessage { .. }
                | Error::DegeneratePosterior { .. }
                | Error::Convergence { .. }
                | Error::NonFinite { .. }
        )
    }
}
