use thiserror::Error;

use crate::diffcore::DiffError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("negative z-path weight {value} at layer {layer}, entry {index}; project first")]
    NegativeWeight { layer: usize, index: usize, value: f64 },
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::Diff(DiffError::NonFinite(_)) => 3,
            Error::Config(_) | Error::Checkpoint(_) => 2,
            _ => 1,
        }
    }
}
