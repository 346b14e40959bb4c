use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("dimension {dim} exceeds the eigendecomposition cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("eigendecomposition did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("bad {field} in {path}: {detail}")]
    Format {
        path: PathBuf,
        field: &'static str,
        detail: String,
    },

    #[error("transport plan did not converge (marginal error {0:e})")]
    PlanNotConverged(f64),

    #[error("non-finite forward pass at batch index {0}")]
    NonFiniteForward(usize),

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("non-finite state at t = {0}")]
    Diverged(f64),

    #[error("solver exceeded {steps} steps (reached t = {t})")]
    StepLimit { steps: usize, t: f64 },

    #[error("{0} rows diverged during steering")]
    DivergedRows(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that represent numerical breakdown (divergence,
    /// non-finite losses) rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteForward(_)
                | Error::NonFiniteLoss(_)
                | Error::Diverged(_)
                | Error::StepLimit { .. }
                | Error::DivergedRows(_)
                | Error::PlanNotConverged(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
