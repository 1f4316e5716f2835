use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("utterance {utterance_id}: {detail}")]
    Utterance { utterance_id: String, detail: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("layer (m={m}, n={n}) failed: {source}")]
    Layer {
        m: usize,
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },

    #[error("missing artifact: {0}")]
    Missing(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            format,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
