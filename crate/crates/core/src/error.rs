use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid neighbor count K={k} for {m} samples")]
    InvalidK { k: usize, m: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line search failed to find a decreasing step (gradient norm {grad_norm:.3e})")]
    LineSearchFailure { grad_norm: f64 },

    #[error("objective increased from {before} to {after} at outer iteration {iteration}")]
    NonDecrease {
        iteration: usize,
        before: f64,
        after: f64,
    },

    #[error("threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),

    #[error("unknown sample id {0:?}")]
    UnknownSample(String),

    #[error("infeasible nu={nu} for n={n}")]
    InfeasibleNu { nu: f64, n: usize },

    #[error("all KLIEP coefficients were projected to zero; kernel width is probably degenerate")]
    AllZeroAlphas,

    #[error("linear system is singular; use a positive ridge parameter")]
    SingularSystem,

    #[error("maximum iterations ({0}) exceeded")]
    MaxItersExceeded(usize),

    #[error("both classes must be present to evaluate")]
    SingleClass,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is caused by bad input rather than by a computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::LineSearchFailure { .. }
                | Error::NonDecrease { .. }
                | Error::AllZeroAlphas
                | Error::SingularSystem
                | Error::MaxItersExceeded(_)
        )
    }
}
