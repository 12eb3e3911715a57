use thiserror::Error;

use crate::cost::Clustering;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has no nonzero entries")]
    EmptyMatrix,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("feature columns without a topic: {}", .0.join(", "))]
    UnmappedFeature(Vec<String>),

    #[error("cluster {id} on the {side} side has zero mass")]
    ZeroMass { side: &'static str, id: u32 },

    #[error("divergence is infinite: p > 0 where q = 0 at position {0}")]
    InfiniteDivergence(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not found: {}", .0.join(", "))]
    NotFound(Vec<String>),

    #[error("cannot pop from an empty cluster list")]
    EmptyPool,

    #[error("iteration cap of {iterations} reached before both lists drained")]
    IterationCap {
        iterations: usize,
        partial: Box<Clustering>,
    },

    #[error("exhaustive enumeration limited to 7x7, got {rows}x{cols}")]
    TooLarge { rows: usize, cols: usize },

    #[error("{side} {index} has zero degree")]
    ZeroDegree { side: &'static str, index: usize },

    #[error("truncated SVD did not converge, relative residual {residual:e}")]
    Convergence { residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
