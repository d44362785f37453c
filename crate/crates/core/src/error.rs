use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid specification at {path}: {message}")]
    Spec { path: String, message: String },
    #[error("condition {condition} violated: {message}")]
    Condition { condition: u8, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("query beyond truncation frontier: {0}")]
    BeyondTruncation(String),
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn spec(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec { path: path.into(), message: message.into() }
    }

    pub fn condition(condition: u8, message: impl Into<String>) -> Self {
        Error::Condition { condition, message: message.into() }
    }
}
