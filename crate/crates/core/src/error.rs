use std::path::PathBuf;

use crate::backends::BackendRole;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("failed to parse config: {0}")]
    ConfigParse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate passage id `{0}`")]
    DuplicatePassage(String),

    #[error("invalid passage `{0}`: text must not be empty")]
    InvalidPassage(String),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{role} backend failed (query {query_id}): {message}")]
    Backend {
        role: BackendRole,
        query_id: String,
        message: String,
    },

    #[error("embedding backend failed: {0}")]
    Embedding(String),

    #[error("routing failed for query {query_id}: {source}")]
    Routing {
        query_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("decomposition of node {node} failed: {message}")]
    Decomposition { node: String, message: String },

    #[error("tree node {node}: {source}")]
    Node {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid depth assignment: {0}")]
    DepthAssignment(String),

    #[error("length mismatch: {preds} predictions vs {golds} gold label sets")]
    LengthMismatch { preds: usize, golds: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no gold labels for query `{0}`")]
    MissingGold(String),

    #[error("pareto axis mismatch at point `{0}`")]
    AxisMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in CLI error records and FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } | Error::ConfigParse(_) => "config",
            Error::Io { .. } => "io",
            Error::Dataset { .. } => "dataset",
            Error::DuplicatePassage(_)
            | Error::InvalidPassage(_)
            | Error::DimensionMismatch { .. } => "index",
            Error::Backend { .. } | Error::Embedding(_) => "backend",
            Error::Routing { .. } => "routing",
            Error::Decomposition { .. } => "decomposition",
            Error::Node { source, .. } => source.kind(),
            Error::DepthAssignment(_) => "depth",
            Error::LengthMismatch { .. }
            | Error::EmptyInput(_)
            | Error::MissingGold(_)
            | Error::AxisMismatch(_) => "eval",
            Error::Json(_) => "json",
        }
    }
}
