use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scene id mismatch: memory holds {memory:?}, batch is for {batch:?}")]
    SceneMismatch { memory: String, batch: String },

    #[error("unsupported snapshot format version {found} (expected {expected})")]
    Version { found: String, expected: u32 },

    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("box placement failed in scene {scene} at box {index} after {attempts} attempts")]
    Placement {
        scene: usize,
        index: usize,
        attempts: usize,
    },

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
