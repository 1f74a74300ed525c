use std::path::PathBuf;

use crate::gp::Hyperparams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gram matrix is ill-conditioned (factorization failed up to jitter {max_jitter:e})")]
    IllConditionedGram { max_jitter: f64 },

    #[error("hyperparameter optimization failed on every start")]
    OptimizationFailure { best: Option<Hyperparams> },

    #[error("trajectory too short: need {needed} frames, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("neither car enters the intersection circle")]
    NoIntersectionCrossing,

    #[error("infeasible nominal problem: {0}")]
    InfeasibleProblem(String),

    #[error("unstable policy: car {car} reached {speed:.2} m/s in trial {trial}")]
    UnstablePolicy { trial: String, car: String, speed: f64 },

    #[error("simulated lead car does not match the lead assumed online in trial {0}")]
    InconsistentLead(String),

    #[error("{file}:{line}: {message}")]
    Schema { file: String, line: u64, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
