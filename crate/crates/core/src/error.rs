use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A run configuration or hyperparameter set is incomplete or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested quantity has no defined value for this input
    /// (for example AUROC with a single class present).
    #[error("undefined: {0}")]
    Undefined(String),

    /// A dataset file does not follow the rollout schema.
    #[error("schema error at line {line}, field `{field}`: {message}")]
    Schema { line: usize, field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by user input rather than the environment.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Config(_) | Error::Undefined(_) | Error::Schema { .. } | Error::Json(_)
        )
    }
}
