use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters supplied when building a model, environment or optimizer.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called in a state where it is not allowed.
    #[error("usage error: {0}")]
    Usage(String),

    /// The integrator produced a non-finite state. Distinct from a normal episode end.
    #[error("simulation fault at t = {time:.6} s: {reason}")]
    SimulationFault { time: f64, reason: String },

    #[error("dimension mismatch: {what} expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unsupported checkpoint format version {found} (supported: {supported})")]
    Version { found: u64, supported: u64 },

    #[error("checkpoint config hash {found} does not match current model {expected}")]
    ConfigHash { expected: String, found: String },

    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },

    #[error("training aborted at iteration {iteration}: {faults} of {rollouts} rollouts faulted")]
    FaultRate {
        iteration: usize,
        faults: usize,
        rollouts: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
