use thiserror::Error;

/// Errors produced by the simulator and the analytic routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    /// A configuration file line that could not be accepted. `line` is 1-based.
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    /// A metric whose denominator is zero. Never reported as 0.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A broken internal invariant; indicates a bug rather than bad input.
    #[error("internal consistency violation: {0}")]
    InternalConsistency(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfiguration(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::InternalConsistency(msg.into())
    }

    /// True for errors caused by user-supplied input.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::InternalConsistency(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
