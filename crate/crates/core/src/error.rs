use thiserror::Error;

use crate::solver::KktCertificate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),

    #[error("feasible set is empty")]
    Infeasible,

    #[error("point is infeasible: row {row} has residual {residual:e} above tolerance")]
    InfeasiblePoint { row: usize, residual: f64 },

    #[error("objective is unbounded over the feasible set")]
    Unbounded,

    #[error("iteration limit ({iterations}) reached before convergence")]
    IterationLimit {
        iterations: usize,
        best: Box<KktCertificate>,
    },

    #[error("objective is not concave: {0}")]
    NotConcave(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("forward cache is stale: computed for parameter version {cached}, current is {current}")]
    StaleCache { cached: u64, current: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("method `{method}` is incompatible with benchmark `{benchmark}`: {reason}")]
    Incompatible {
        method: String,
        benchmark: String,
        reason: String,
    },

    #[error("dataset too small: {0} instances, need at least {1}")]
    DatasetTooSmall(usize, usize),

    #[error("csv schema error: {0}")]
    CsvSchema(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
