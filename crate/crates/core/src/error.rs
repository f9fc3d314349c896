use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value produced by `{primitive}`")]
    NonFinite { primitive: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("design parameter outside its feasible set: {0}")]
    InfeasibleDesign(String),

    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },

    #[error("criterion diverged: {0}")]
    CriterionDiverged(String),

    #[error("{what} is ill-conditioned after jitter escalation")]
    IllConditioned { what: &'static str },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("no restart produced a feasible design")]
    NoFeasibleDesign,

    #[error("thread {index}: {source}")]
    Thread {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config keys: {}", keys.join(", "))]
    Config { keys: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_thread(self, index: usize) -> Self {
        Error::Thread { index, source: Box::new(self) }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) => 2,
            Error::Io { .. } | Error::Format(_) => 3,
            Error::Domain(_) | Error::InfeasibleDesign(_) => 4,
            Error::NonFinite { .. } | Error::TrainingDiverged { .. } | Error::CriterionDiverged(_) => 5,
            Error::IllConditioned { .. } | Error::DegenerateDesign(_) | Error::NoFeasibleDesign => 6,
            Error::Thread { source, .. } | Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
