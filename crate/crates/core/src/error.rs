use thiserror::Error;

use crate::models::ModeIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gimbal lock: pitch {pitch} rad is within 1e-6 of ±π/2")]
    GimbalLock { pitch: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical blow-up: covariance diagonal entry {index} is {value}")]
    NumericalBlowup { index: usize, value: f64 },

    #[error("singular innovation covariance (reciprocal condition {rcond:e})")]
    SingularInnovation { rcond: f64 },

    #[error("every child branch weight underflowed (max log-weight {max_log_weight})")]
    AllBranchesDead { max_log_weight: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate detector window: mean specific force norm {norm:e} is too small")]
    DegenerateWindow { norm: f64 },

    #[error("invalid time step {dt} s (must lie in (0, 0.1])")]
    InvalidTimeStep { dt: f64 },

    #[error("optimizer did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("branch {branch} (mode {mode}): {source}")]
    InBranch {
        branch: usize,
        mode: ModeIndex,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

}

impl Error {
    pub fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }

    /// Innermost error, with branch and sample wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InBranch { source, .. } | Error::AtSample { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical machinery rather than of inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NumericalBlowup { .. }
                | Error::SingularInnovation { .. }
                | Error::AllBranchesDead { .. }
                | Error::NonFinite(_)
                | Error::DegenerateInput(_)
                | Error::GimbalLock { .. }
                | Error::InvalidTimeStep { .. }
        )
    }
}
