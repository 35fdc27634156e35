use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("discount factor must lie in (0, 1), got {0}")]
    InvalidDiscount(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{aborted} of {total} paths produced a non-finite state (first: path {first_path}, step {first_step})")]
    PathsAborted {
        aborted: usize,
        total: usize,
        first_path: u64,
        first_step: usize,
    },

    #[error("statistics are not in the probability simplex (sum = {sum}, min = {min})")]
    NotInSimplex { sum: f64, min: f64 },

    #[error("invalid statistics vector: {0}")]
    InvalidStats(String),

    #[error("normal equations are ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("quadrature did not converge: refinements disagree by {diff:e} after {levels} levels")]
    QuadratureNonConvergence { diff: f64, levels: usize },

    #[error("grid index ({i}, {j}) is not interior to a {nx}x{nz} grid")]
    BoundaryIndex {
        i: usize,
        j: usize,
        nx: usize,
        nz: usize,
    },

    #[error("loss became non-finite at iteration {iter}: {detail}")]
    NonFiniteLoss { iter: usize, detail: String },

    #[error("no return-distribution oracle available: {0}")]
    MissingOracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
