use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("non-positive disutility: {0}")]
    NonPositive(String),

    #[error("item {item}: expected {expected} disutilities, found {found}")]
    LengthMismatch { item: usize, expected: usize, found: usize },

    #[error("instance has no items")]
    EmptyInstance,

    #[error("exact MMS search too large: {m} items for {n} agents (limit {limit})")]
    InstanceTooLarge { m: usize, n: usize, limit: usize },

    #[error("invalid stacking operation: {0}")]
    InvalidOperation(String),

    #[error("x = {0} lies outside [-1/2, 1/2]")]
    OutOfRange(String),

    #[error("agent {agent} revealed a third distinct disutility at item {item}")]
    BiValuePromiseViolated { agent: usize, item: usize },

    #[error("inconsistent history: {0}")]
    InconsistentHistory(String),

    #[error("stacking reduction mismatch at step {step}: {detail}")]
    ReductionMismatch { step: usize, detail: String },

    #[error("infeasible generator configuration: {0}")]
    InfeasibleConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
