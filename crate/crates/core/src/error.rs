use alloc::string::String;

/// Error categories shared by every primitive in this crate.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("layer range error: {0}")]
    Range(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
