use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("invalid instance at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("bounds inverted at index {0}")]
    InvertedBounds(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("LP solver stalled after {0} iterations")]
    LpStalled(usize),
    #[error("relaxation is infeasible")]
    Infeasible,
    #[error("multiplier keyed to unknown cut {0}")]
    UnknownCut(String),
    #[error("no feasible grid point found (possibly infeasible at this resolution)")]
    NoFeasibleGridPoint,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
