use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the solver core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid cost: {0}")]
    InvalidCost(String),

    #[error("gradient value lies outside the range of Dh")]
    Range,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("index {index} out of range or not allowed here ({detail})")]
    Index { index: usize, detail: &'static str },

    #[error("cost tensor needs {entries} entries, budget is {budget}")]
    BudgetExceeded { entries: usize, budget: usize },

    #[error("cost tensor entry {index:?}: {source}")]
    TensorEntry { index: Vec<usize>, source: Box<Error> },

    #[error("linear program is infeasible: {0}")]
    Infeasible(String),

    #[error("simplex stalled after {iterations} iterations: {detail}")]
    NumericalStall { iterations: usize, detail: String },

    #[error("extracted coupling is not optimal: cost {value:e} vs optimum {optimum:e}")]
    OptimalityViolation { value: f64, optimum: f64 },

    #[error("marginal mismatch: {0}")]
    MarginalMismatch(String),

    #[error("rank-deficient neighbourhood around atom {0}")]
    DegenerateNeighborhood(usize),
}

pub type Result<T> = core::result::Result<T, Error>;
