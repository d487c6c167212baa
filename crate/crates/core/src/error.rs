use thiserror::Error;

use crate::train::Diverged;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: non-finite value in result")]
    NonFinite { op: &'static str },

    /// Degenerate numeric input, e.g. a zero-norm embedding or a probability outside (0,1).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid graph structure: {0}")]
    Structure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("training diverged at epoch {}: {}", .0.epoch, .0.reason)]
    Diverged(Box<Diverged>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }
}
