use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Requested concurrence lies above the cutoff for this time.
    #[error("no readout reaches concurrence {target} (cutoff {cutoff})")]
    NoSolution { target: f64, cutoff: f64 },

    #[error("concurrence is not unimodal in the readout: {0}")]
    NotUnimodal(String),

    #[error("integrator failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("trajectory time grids differ: {0}")]
    GridMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that originate in numerics rather than in inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoSolution { .. }
                | Error::NotUnimodal(_)
                | Error::StepFailure { .. }
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
