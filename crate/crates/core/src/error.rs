use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("invalid linear program: {0}")]
    Invalid(String),
    #[error("solver backend: {0}")]
    Backend(String),
    #[error("solution failed verification: {0}")]
    Inaccurate(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("grid of {nodes} nodes exceeds the node budget {budget}")]
    NodeBudget { nodes: usize, budget: usize },
    #[error("problem too large: {0}")]
    ProblemSize(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("linear program stalled at {stage}")]
    Stalled { stage: String },
    #[error("linear program unexpectedly {status} at {stage}")]
    UnexpectedStatus { stage: String, status: String },
    #[error("measure is unbalanced: total mass {mass:e}")]
    Unbalanced { mass: f64 },
    #[error("Beckmann divergence system infeasible: {0}")]
    BeckmannInfeasible(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
