use thiserror::Error;

/// Errors raised by the solvers, samplers and the sweep harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: &'static str, residual: f64 },

    #[error("{what} diverged: {detail}")]
    Divergence { what: &'static str, detail: String },

    #[error("infeasible trial state: {0}")]
    Infeasible(String),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("no bracket: {0}")]
    NoBracket(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
