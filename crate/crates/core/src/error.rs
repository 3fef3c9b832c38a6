use thiserror::Error;

/// Errors raised by the simulator core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    /// A configuration value is out of its valid domain. `field` is a dotted path
    /// into the scenario document (e.g. `market.p_min`).
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Internal bookkeeping invariant was violated (e.g. a trade settled against the
    /// wrong agent).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Environment lifecycle misuse (stepping a finished episode, missing actions).
    #[error("lifecycle error: {0}")]
    Lifecycle(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl SimError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
