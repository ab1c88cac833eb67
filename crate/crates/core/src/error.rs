use thiserror::Error;

use crate::model::ValidationReport;

/// Errors produced by the library.
///
/// Each variant maps to a distinct CLI exit status, so callers can tell
/// bad input apart from an infeasible problem or a numerical failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input data breaks one or more model invariants.
    #[error("validation failed: {0}")]
    Validation(ValidationReport),

    /// An argument is outside the domain of the operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The constraint set of an optimization problem is empty.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative routine ran out of budget before meeting its tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A policy produced a gross growth factor below the ruin threshold.
    #[error("ruin threshold violated in replicate {replicate} at step {step}: factor {factor} < b = {threshold}")]
    RuinViolation {
        replicate: usize,
        step: usize,
        factor: f64,
        threshold: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
