use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow while evaluating {0}")]
    Overflow(String),

    #[error("degenerate activation: {0}")]
    Degenerate(String),

    #[error("no critical initialization exists: {0}")]
    NoCriticality(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("all ensemble members were excluded")]
    AllExcluded,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
