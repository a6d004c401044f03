use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate header at line {line}")]
    DuplicateHeader { line: u64 },

    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },

    #[error("no observations")]
    NoObservations,

    #[error("no outcomes")]
    NoOutcomes,

    #[error("duplicate patient_id `{0}`")]
    DuplicatePatient(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no events to fit")]
    NoEvents,

    #[error("quasi-separation: coefficient {index} reached {value:.3}")]
    QuasiSeparation { index: usize, value: f64 },

    #[error("no convergence after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("hazard overflow: linear predictor {0:.3} exceeds 700")]
    HazardOverflow(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate paired test")]
    DegeneratePairedTest,

    #[error("clustering: {0}")]
    Cluster(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
