use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("Gram matrix factorization failed (N = {n}, jitter = {jitter:e}); increase jitter")]
    Factorization { n: usize, jitter: f64 },

    #[error("rollout aborted at step {step}: policy returned non-finite control at x = ({x}, {y})")]
    NonFinitePolicy { step: usize, x: f64, y: f64 },

    #[error("value iteration did not converge within {sweeps} sweeps (last delta {delta:e})")]
    NoConvergence { sweeps: usize, delta: f64 },

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
