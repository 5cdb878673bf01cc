use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("exponent p = {p} is out of range for dimension {dim} (need 1 < p{bound})")]
    SupercriticalExponent { dim: usize, p: f64, bound: String },

    #[error("shooting did not converge: {0}")]
    NonConvergence(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at offset {position}: expected one of [{}]", expected.join(", "))]
    Parse {
        position: usize,
        expected: Vec<String>,
    },

    #[error("unknown identifier `{name}` at offset {position}")]
    UnknownIdentifier { name: String, position: usize },

    #[error("grid with {nodes} nodes exceeds the budget of {budget} nodes")]
    TooLarge { nodes: usize, budget: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("linear solve failed after {iterations} iterations (residual {residual:e})")]
    LinearSolveFailure { iterations: usize, residual: f64 },

    #[error("ansatz centre {centre:?} is only {margin} decay lengths from the box edge (need 12)")]
    OutOfBox { centre: Vec<f64>, margin: f64 },

    #[error("tangent frame is ill conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("correction iteration failed: {0}")]
    ContractionFailure(String),

    #[error("eigenvalue estimate failed: {0}")]
    EigenSolveFailure(String),

    #[error("newton iteration diverged: {0}")]
    NewtonDivergence(String),

    #[error("singular hessian: {0}")]
    SingularHessian(String),

    #[error("field maximum is not isolated")]
    FlatField,

    #[error("critical points do not fit any known manifold (best residual {residual:e})")]
    ClusterAmbiguous { residual: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
