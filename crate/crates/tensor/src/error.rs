use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tape has already been consumed by a backward pass")]
    TapeConsumed,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("every entry of the distribution is masked")]
    AllMasked,
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
