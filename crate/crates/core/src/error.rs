use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("standing assumptions violated:\n{0}")]
    Validation(ValidationReport),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations (last increment {last_increment:e})")]
    NonConvergence {
        iterations: usize,
        last_increment: f64,
        last_iterate: Vec<f64>,
    },

    #[error("iterate diverged at iteration {iteration} (|theta|_inf = {norm:e})")]
    Divergence { iteration: usize, norm: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integration produced a non-finite state at t = {time}")]
    IntegrationBlowUp { time: f64 },

    #[error("{count} deterministic policies exceed the enumeration limit of {limit}; use the closed-form threshold instead")]
    EnumerationTooLarge { count: u128, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
