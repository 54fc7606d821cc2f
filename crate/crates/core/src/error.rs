use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("no instruction writes the output register r0")]
    NoOutput,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("channel cap exceeded at node {node}: {channels} channels > {max}")]
    ChannelCapExceeded {
        node: usize,
        channels: usize,
        max: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("IDX format error ({field} at byte {offset}): {message}")]
    Format {
        field: &'static str,
        offset: usize,
        message: String,
    },

    #[error("surrogate fit failed: {0}")]
    Fit(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },

    #[error("{path}: {message}")]
    File { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
