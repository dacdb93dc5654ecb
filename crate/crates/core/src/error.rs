use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scale matrix ({what}): {detail}")]
    InvalidScale { what: String, detail: String },

    #[error("invalid degrees of freedom for {what}: {value}")]
    InvalidDof { what: String, value: f64 },

    #[error("evolved degrees of freedom {evolved} <= 0 (beta = {beta}, n = {n}, q = {q})")]
    DegenerateDof { beta: f64, n: f64, q: usize, evolved: f64 },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("at time index {t}: {source}")]
    Step {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn scale(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InvalidScale { what: what.into(), detail: detail.into() }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn at_step(self, t: usize) -> Self {
        Error::Step { t, source: Box::new(self) }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidScale { .. }
            | Error::InvalidDof { .. }
            | Error::DegenerateDof { .. }
            | Error::Singular(_) => ErrorKind::Numerical,
            Error::Partition(_) | Error::Config(_) | Error::Mode(_) => ErrorKind::Config,
            Error::Dimension(_) | Error::Input(_) | Error::Parse { .. } => ErrorKind::Data,
            Error::Io { .. } => ErrorKind::Io,
            Error::Step { source, .. } => source.kind(),
        }
    }
}
