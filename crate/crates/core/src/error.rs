use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// A backward pass was requested with a cache that no longer matches the parameters.
    #[error("stale forward cache: parameters changed since the forward pass")]
    StaleCache,

    #[error("training diverged: {0}")]
    Diverged(String),

    /// UQ training hit a non-finite loss; the per-epoch losses so far are kept.
    #[error("UQ training diverged in epoch {epoch}")]
    TrainingDiverged {
        epoch: u64,
        train_loss: Vec<f64>,
        valid_loss: Vec<f64>,
    },

    #[error("simulation diverged at sample {sample}, step {step}")]
    SimulationDiverged { sample: usize, step: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("non-positive input at indices {indices:?}")]
    NonPositive { indices: Vec<usize> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
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

    /// True for numerical blow-ups, as opposed to usage or I/O problems.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Diverged(_) | Error::SimulationDiverged { .. })
    }
}
