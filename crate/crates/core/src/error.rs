use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no onset in series '{0}': velocity never rises above zero")]
    NoOnset(String),

    #[error("instance too large for the reference solver: {n} points (limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("model file: unsupported format version '{0}'")]
    Version(String),

    #[error("model file: checksum mismatch (expected {expected}, computed {computed})")]
    Checksum { expected: String, computed: String },

    #[error("model file: {0}")]
    Format(String),

    #[error("grid of {cells} cells exceeds the budget of {budget}")]
    Budget { cells: usize, budget: usize },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<V, E = Error> = std::result::Result<V, E>;
