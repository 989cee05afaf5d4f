use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the registration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),

    #[error("too few correspondence pairs: got {got}, need at least {need}")]
    TooFewPairs { got: usize, need: usize },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("population is empty")]
    EmptyPopulation,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}:{line}: non-finite coordinate", path.display())]
    NonFiniteCoordinate { path: PathBuf, line: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
