use std::path::PathBuf;

use thiserror::Error;

use crate::params::Params;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] binscene_core::Error),

    #[error("model configuration: {0}")]
    Config(String),

    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: String },

    #[error("training diverged at step {step}; last finite parameters kept")]
    Diverged { step: usize, last_good: Box<Params> },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
