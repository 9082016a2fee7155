use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small: nx = {nx}, ny = {ny} (need at least 3 x 3)")]
    GridTooSmall { nx: usize, ny: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{family}: {count} node(s) intersect the singular set ({detail}); first offending nodes: {nodes:?}")]
    SingularSet {
        family: String,
        detail: String,
        count: usize,
        nodes: Vec<(f64, f64)>,
    },

    #[error("evaluation outside the admissible set: {0}")]
    OutOfDomain(String),

    #[error("boundary mismatch: traces differ by {gap:.3e} (tolerance {tol:.3e})")]
    BoundaryMismatch { gap: f64, tol: f64 },

    #[error("missing boundary value at node ({i}, {j})")]
    MissingBoundary { i: usize, j: usize },

    #[error("Newton iteration diverged at lambda = {lambda} after {iterations} iteration(s) (residual {residual:.3e})")]
    NewtonDivergence {
        lambda: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("vector field invariant violated: {0}")]
    FieldInvariant(String),

    #[error("field evaluation failed at ({x}, {y}): {reason}")]
    FieldEvaluation { x: f64, y: f64, reason: String },

    #[error("initial curve is not transversal to the characteristics at sample {index} (|d.n| = {value:.3e})")]
    Transversality { index: usize, value: f64 },

    #[error("resampling produced no covered nodes")]
    EmptyCoverage,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
