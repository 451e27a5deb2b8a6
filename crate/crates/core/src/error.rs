use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("perturbation outside the small-angle regime: {0}")]
    Regime(String),

    #[error("non-positive depth {depth} after transformation")]
    ProjectionDomain { depth: f64 },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("non-finite loss at episode {episode}: {detail}")]
    NonFinite { episode: usize, detail: String },

    #[error("failed to read {path}: {message}")]
    Read { path: PathBuf, message: String },

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn read(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Read {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
