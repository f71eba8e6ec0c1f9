use std::path::PathBuf;

/// Errors surfaced by every layer of the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite values at layer {layer} ({context})")]
    NonFinite { layer: usize, context: &'static str },

    #[error("non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("gradient check failed: max relative error {worst:e} >= {tolerance:e}")]
    GradCheck { worst: f64, tolerance: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("idx parse error: {0}")]
    Idx(String),

    #[error("trace parse error at line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("client {id}: {source}")]
    Client {
        id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a client id to an error raised during that client's work.
    pub fn for_client(self, id: usize) -> Self {
        Error::Client {
            id,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the user's configuration or inputs rather than by the run.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Precondition(_) | Error::Idx(_) | Error::Trace { .. } => {
                true
            }
            Error::Client { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
