use std::path::PathBuf;

/// Errors raised by the solver, the estimators and the CLI layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite position {position} for particle {particle} at step {step}")]
    NonFinite { step: u64, particle: usize, position: f64 },

    #[error("degenerate particle cloud: {0}")]
    DegenerateCloud(String),

    #[error("mass in window dropped to {mass:.6} at t = {time}")]
    MassLoss { time: f64, mass: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
