use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("degenerate code: {0}")]
    DegenerateCode(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate Tanner graph: {0}")]
    DegenerateGraph(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingFailure { epoch: usize, detail: String },

    #[error("no BCH code of length {n} corrects {margin} errors; available (k, t): {available:?}")]
    UnsatisfiableMargin {
        n: usize,
        margin: usize,
        available: Vec<(usize, usize)>,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(expected: usize, actual: usize) -> Self {
        Error::Dimension { expected, actual }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
