use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("chain does not mix: {0}")]
    NonMixing(String),

    #[error("chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("index {index} out of range (valid 1..={max})")]
    OutOfRange { index: usize, max: usize },

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("insufficient replicates: need at least {required}, got {got}")]
    InsufficientReplicates { required: usize, got: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable tag, used in the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NonMixing(_) => "non_mixing",
            Error::NonErgodic(_) => "non_ergodic",
            Error::OutOfRange { .. } => "out_of_range",
            Error::Consistency(_) => "consistency",
            Error::InsufficientReplicates { .. } => "insufficient_replicates",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
