use thiserror::Error;

use crate::equilibrium::EquilibriumResult;

/// Errors raised by the numerical routines and the batch driver.
#[derive(Debug, Error)]
pub enum Error {
    /// A point lies outside the domain of the map, the weight, or the set K.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter is outside its documented range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Inputs are structurally incompatible (grid mismatch, empty support, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// A configured size or work budget would be exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// Non-finite values appeared during a computation.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A required precondition (such as f-admissibility) does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Adaptive truncation did not stabilize; carries the last solve.
    #[error("no convergence after {doublings} doublings (last radius {radius})")]
    NoConvergence {
        radius: f64,
        doublings: usize,
        last: Box<EquilibriumResult>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
