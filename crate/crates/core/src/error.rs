use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: invalid record: {msg}")]
    Validation {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}, timestep {t} (non-finite loss); try a smaller learning_rate")]
    Divergence { epoch: usize, t: u32 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("negative sampling failed: {0}")]
    Sampling(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
