use std::path::PathBuf;

use crate::filter::FilterRun;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The integrator produced a non-finite state.
    #[error("integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    /// The filter lost stability; `run` holds everything recorded before `cycle`.
    #[error("filter diverged at cycle {cycle}")]
    Diverged { cycle: usize, run: Box<FilterRun> },

    #[error("degenerate sample: all {len} values are equal")]
    DegenerateSample { len: usize },

    #[error("innovation covariance is not positive definite after jitter escalation")]
    SingularInnovationCovariance,

    #[error("summary window is empty")]
    EmptyWindow,

    #[error("missing required field `{0}`")]
    MissingField(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a bad configuration document or flag combination.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::MissingField(_) | Error::InvalidParameter(_) | Error::InvalidDimension(_)
        )
    }
}
