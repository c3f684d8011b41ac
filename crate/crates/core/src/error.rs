use thiserror::Error;

use crate::solvers::SolveReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("conjugate gradient diverged at iteration {iteration}")]
    CgDiverged { iteration: usize },
    #[error("solver failed at outer iteration {outer}: {source}")]
    OuterFailure {
        outer: usize,
        #[source]
        source: Box<Error>,
        /// History accumulated before the failing iteration.
        report: Box<SolveReport>,
    },
    #[error("kernel has no positive mass after projection (kernel regularization too strong)")]
    DegenerateKernel,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
