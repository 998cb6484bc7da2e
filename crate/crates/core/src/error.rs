use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("action does not conform to its spec: {0}")]
    Contract(String),
    #[error("environment fault: {0}")]
    Env(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint config digest {stored} does not match {expected}")]
    DigestMismatch { stored: String, expected: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint not found: {0}")]
    Missing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
