//! Crate-wide error type.
//!
//! Infeasibility of a sharding task is deliberately *not* an error: searches
//! and baselines report it as data so callers can aggregate success rates.

use thiserror::Error;

/// Errors surfaced by generators, cost models, search, and I/O helpers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A table cannot be split column-wise (dim too small or halves would
    /// not stay divisible by 4).
    #[error("table {id} with dim {dim} is not splittable")]
    NotSplittable { id: String, dim: u32 },

    /// A plan violates a structural constraint; the message names it.
    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
