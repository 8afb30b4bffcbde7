use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("batch of {0} rows is too small for batch normalization in train mode (need >= 2)")]
    BatchSize(usize),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("corrupt payload at byte {offset}: {message}")]
    Corruption { offset: usize, message: String },
    #[error("length mismatch at byte {offset}: {message}")]
    Length { offset: usize, message: String },
    #[error("dataset is empty after {0}")]
    EmptyDataset(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("only {available} clients available, at least {required} required")]
    Availability { available: usize, required: usize },
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("backward called with a stale or mismatched forward cache")]
    StaleCache,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn corrupt(offset: usize, msg: impl Into<String>) -> Self {
        Error::Corruption {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn length(offset: usize, msg: impl Into<String>) -> Self {
        Error::Length {
            offset,
            message: msg.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::Numeric(_) => 4,
            Error::EmptyDataset(_)
            | Error::TooFewSamples { .. }
            | Error::Format { .. }
            | Error::Corruption { .. }
            | Error::Length { .. }
            | Error::Io(_) => 3,
            _ => 2,
        }
    }
}
