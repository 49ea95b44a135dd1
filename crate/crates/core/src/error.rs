use std::io;

use thiserror::Error;

/// Errors produced by the solver pipeline and the theory engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("kernel evaluated to non-finite value {value} at (t_{i}, s_{k})")]
    Evaluation { i: usize, k: usize, value: f64 },

    #[error("invalid state: {0}")]
    State(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("insufficient rank: need at least {needed}, spectrum has {rank}")]
    InsufficientRank { needed: usize, rank: usize },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("lambda selection failed: {0}")]
    Selection(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_) | Error::Config(_) | Error::Csv(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
