use std::path::PathBuf;

use stiffssm_tensor::TensorError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("unknown model variant `{name}` (available: {available})")]
    UnknownVariant { name: String, available: String },

    #[error("degenerate simplex face: denominator {value:e} for component {index} is below {delta:e}")]
    DegenerateFace { index: usize, value: f64, delta: f64 },

    #[error("invalid encoding: reconstructed last mass fraction is {value:e}")]
    InvalidEncoding { value: f64 },

    #[error("singular linear system (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("no flat temperature profile with mean slope below {epsilon}")]
    NoFlatRegime { epsilon: f64 },

    #[error("non-finite loss at iteration {iteration}, batch {batch}")]
    NonFiniteLoss { iteration: usize, batch: usize },

    #[error("non-finite prediction in window {window}")]
    NonFinitePrediction { window: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("integrator failed at t = {t:e}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

/// Coarse failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

impl Error {
    pub fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { what: what.into(), reason: reason.into() }
    }

    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid { .. } | Error::UnknownVariant { .. } | Error::Shape { .. } => ErrorKind::Config,
            Error::Tensor(TensorError::NonFinite { .. }) => ErrorKind::Numerical,
            Error::Tensor(_) => ErrorKind::Config,
            Error::Io { .. } | Error::Format { .. } => ErrorKind::Io,
            Error::DegenerateFace { .. }
            | Error::InvalidEncoding { .. }
            | Error::Singular { .. }
            | Error::NoFlatRegime { .. }
            | Error::NonFiniteLoss { .. }
            | Error::NonFinitePrediction { .. }
            | Error::NonFinite(_)
            | Error::Integrator { .. } => ErrorKind::Numerical,
        }
    }
}
