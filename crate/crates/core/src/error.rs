use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("partition has {got} labels but the graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown variant `{0}` (expected ndc, dc, pp-uniform or pp-nonuniform)")]
    UnknownVariant(String),

    #[error("metadata: {0}")]
    Metadata(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("iterative proportional fitting did not converge after {iterations} iterations (residual {residual:e}); marginals: {marginals}")]
    IpfNonConvergence {
        iterations: usize,
        residual: f64,
        marginals: String,
    },

    #[error("{0}")]
    Config(String),

    #[error("fetch failed: {0}")]
    Fetch(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
