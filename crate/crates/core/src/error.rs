use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid video format: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("unsupported Y4M colorspace `{0}`")]
    UnsupportedColorspace(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient in round {round}, iteration {iteration}")]
    Numeric { round: usize, iteration: usize },

    #[error("scorer `{0}` does not provide gradients")]
    Capability(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("scorer failed at query {query}: {message}")]
    Scorer { query: u64, message: String },

    #[error("bridge protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
