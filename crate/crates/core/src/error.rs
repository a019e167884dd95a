use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("degenerate covariance: cloud `{0}` is rank deficient")]
    DegenerateCovariance(String),

    #[error("degenerate neighborhood around point {0}")]
    DegenerateNeighborhood(usize),

    #[error("descriptor row count mismatch: expected {expected}, found {found}")]
    RowCountMismatch { expected: usize, found: usize },

    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },

    #[error("time {t} outside integrated horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("singular Gauss-Newton system")]
    SingularSystem,

    #[error("vertices {0} and {1} lie in different connected components")]
    Disconnected(usize, usize),

    #[error("field file mismatch: {0}")]
    FieldMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("EM iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteState { .. } | Error::SingularSystem => true,
            Error::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
