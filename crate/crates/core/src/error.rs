use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid rank r={r} for local dimension d={d} (need 0 <= r <= d^2)")]
    InvalidRank { d: usize, r: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible projector assignment for d={d}, r={r}, k={k}: {reason}")]
    InfeasibleAssignment {
        d: usize,
        r: usize,
        k: usize,
        reason: String,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The next allocation would exceed the configured budget.
    #[error("resource limit: {what} needs {needed} but the budget is {budget}")]
    ResourceLimit { what: String, needed: u128, budget: u128 },

    #[error("rank-deficient submatrix: rank {rank} on {rows} selected rows")]
    RankDeficientSubmatrix { rows: usize, rank: usize },

    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("iteration limit of {limit} reached without a verdict")]
    IterationLimit { limit: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl Error {
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, Error::ResourceLimit { .. })
    }
}
