use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {value} outside the support (must be >= {start})")]
    OutsideSupport { value: f64, start: f64 },

    #[error("covariate dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("conditional mean undefined: tail index {gamma} >= 1")]
    UndefinedMoment { gamma: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty sample")]
    EmptySample,

    #[error("theta {theta:?} outside the parameter box")]
    ThetaOutOfDomain { theta: Vec<f64> },

    #[error(
        "maximum likelihood did not converge after {iterations} iterations \
         (best log-likelihood {log_likelihood}, point {best:?})"
    )]
    NonConvergence {
        best: Vec<f64>,
        log_likelihood: f64,
        iterations: usize,
    },

    #[error("objective is not finite at theta = {thetas:?}")]
    NonFiniteObjective { thetas: Vec<Vec<f64>> },

    #[error("target premium {target} exceeds the saturation premium {saturation}")]
    NoSolution { target: f64, saturation: f64 },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) => 2,
            Error::MissingColumn(_)
            | Error::Data(_)
            | Error::EmptySample
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::DimensionMismatch { .. }
            | Error::OutsideSupport { .. } => 3,
            Error::UndefinedMoment { .. }
            | Error::ThetaOutOfDomain { .. }
            | Error::NonConvergence { .. }
            | Error::NonFiniteObjective { .. }
            | Error::NoSolution { .. } => 4,
        }
    }
}
