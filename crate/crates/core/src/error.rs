use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("unknown vertex {0}")]
    UnknownVertex(usize),

    #[error("unknown edge {0}")]
    UnknownEdge(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("linear solver failed: {message} (relative residual {residual:e})")]
    Solver { message: String, residual: f64 },

    #[error("iteration did not converge: {0}")]
    Iteration(String),

    #[error("newton did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("degenerate resolvent query: {0}")]
    DegenerateQuery(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
