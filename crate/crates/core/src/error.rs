use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {what}")]
    NonFinite { what: String },

    #[error("backward needs a single-element loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("langevin chain diverged at step {step}: {detail}")]
    Langevin { step: usize, detail: String },

    #[error("non-finite {loss} loss at iteration {iteration}")]
    Diverged { loss: &'static str, iteration: u64 },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
