use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A set, objective, graph or config violates its construction contract.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called outside its domain (infeasible point, shape mismatch).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("graph generation failed: {0}")]
    Generation(String),

    /// The sets of the problem have no common point.
    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("numerical failure at step {step}: {message}")]
    Numerical { step: usize, message: String },

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
