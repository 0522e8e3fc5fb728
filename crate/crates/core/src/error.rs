use thiserror::Error;

use crate::formation::FormationTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("outcome enumeration over {assignments} assignments exceeds cap {cap}")]
    EnumerationLimit { assignments: f64, cap: u64 },

    #[error("exhaustive search over {n} users exceeds limit {limit}")]
    SizeLimit { n: usize, limit: usize },

    #[error("coalition formation did not converge within {passes} passes")]
    PassLimit {
        passes: usize,
        trace: Box<FormationTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig { .. } => "invalid_config",
            Error::InvalidInput(_) => "invalid_input",
            Error::EnumerationLimit { .. } => "enumeration_limit",
            Error::SizeLimit { .. } => "size_limit",
            Error::PassLimit { .. } => "pass_limit",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}
