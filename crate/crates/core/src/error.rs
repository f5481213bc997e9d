use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{field}` out of range: {reason}")]
    OutOfRange { field: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no probability mass below the pilot length (L = {pilot_len})")]
    DegenerateDistribution { pilot_len: usize },

    #[error("zero forcing unavailable: {0}")]
    ZfUnavailable(String),

    #[error("need at least 2 trials, got {0}")]
    InsufficientTrials(usize),
}

impl Error {
    pub(crate) fn range(field: &'static str, reason: impl Into<String>) -> Self {
        Error::OutOfRange {
            field,
            reason: reason.into(),
        }
    }

    /// Name of the offending field for range errors.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::OutOfRange { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
