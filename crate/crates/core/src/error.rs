use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A structural or numeric configuration is invalid (kernel too large, bad hyperparameters, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Batch statistics cannot be computed from fewer than two values per channel.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    /// Misuse of the recorded computation graph.
    #[error("graph error: {0}")]
    Graph(String),

    #[error("{file}:{line}: parse error: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// The data cannot support the requested operation (missing class, no windows, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    /// The message already includes the underlying error, so it is not exposed as a source.
    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), err: source }
    }
}
