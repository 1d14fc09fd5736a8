use std::path::PathBuf;

use thiserror::Error;

use crate::systems::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invalid system: {}", format_violations(.0))]
    InvalidSystem(Vec<Violation>),

    #[error("domain randomization found no valid system after {attempts} attempts")]
    RetriesExhausted { attempts: usize },

    #[error("invalid joint configuration: {0}")]
    InvalidJoints(String),

    #[error("torsion shooting did not converge after {iterations} iterations (residual {residual:.3e})")]
    ShootingNoConvergence { iterations: usize, residual: f64 },

    #[error("episode already finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid path spec: {0}")]
    InvalidSpec(String),

    #[error("damped least-squares system is singular")]
    SingularUpdate,

    #[error("degenerate regression: {0}")]
    DegenerateFit(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
