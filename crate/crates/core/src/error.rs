use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A generator or function received an invalid parameter combination.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("graph is disconnected: node {unreachable} cannot be reached from node {from}")]
    Disconnected { from: usize, unreachable: usize },

    /// Shapes of matrices and catalogs disagree, or an id is out of range.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("object {object} (size {size}) does not fit on server {server} (capacity {capacity})")]
    Capacity {
        server: usize,
        object: usize,
        size: u64,
        capacity: u64,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("invalid placement: {0}")]
    InvalidPlacement(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("trace node {node}: interval [{start}, {end}) overlaps an earlier record")]
    Overlap { node: usize, start: f64, end: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
