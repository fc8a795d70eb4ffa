use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// A caller passed an invalid parameter.
    Usage,
    /// Input data is malformed or violates the graph schema.
    Data,
    /// A pipeline stage could not produce a meaningful result.
    Task,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}:{line}: duplicate node `{id}` ({kind}), first defined on line {first_line}", path.display())]
    Conflict {
        path: PathBuf,
        line: usize,
        first_line: usize,
        id: String,
        kind: &'static str,
    },

    #[error("{}:{line}: unknown endpoint `{id}`", path.display())]
    Reference {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("syntax error: {0}")]
    Syntax(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("node {0} not found")]
    NotFound(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("task failed: {0}")]
    Task(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Argument(_) | Error::Syntax(_) => ErrorClass::Usage,
            Error::Task(_) | Error::UndefinedCorrelation(_) | Error::UndefinedMetric(_) => {
                ErrorClass::Task
            }
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
