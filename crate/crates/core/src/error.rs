use thiserror::Error;

/// Errors produced by the analytics core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData { what: &'static str, needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular design matrix: column `{column}` is linearly dependent on earlier columns")]
    SingularDesign { column: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("training of {model} failed at epoch {epoch}: {reason}")]
    Training { model: &'static str, epoch: usize, reason: String },

    #[error("feature schema mismatch: expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("unavailable: {0}")]
    Unavailable(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
