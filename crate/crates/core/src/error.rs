use thiserror::Error;

use crate::domain::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid token {id}: {reason}")]
    InvalidToken { id: TokenId, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scorer contract violated: {0}")]
    ScorerContract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn token(id: TokenId, reason: impl Into<String>) -> Self {
        Error::InvalidToken {
            id,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidToken { .. } => "invalid_token",
            Error::Config(_) => "config",
            Error::ScorerContract(_) => "scorer_contract",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
