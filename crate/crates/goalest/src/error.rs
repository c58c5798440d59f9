use thiserror::Error;

/// Errors produced by mesh construction, assembly, and the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),

    #[error("coefficient vector length {got} does not match space dof count {expected}")]
    SpaceMismatch { expected: usize, got: usize },

    #[error("spaces are built on different meshes")]
    MeshMismatch,

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("linear solve did not reach tolerance {tol:e}: residual {achieved:e}")]
    LinearSolveFailure { tol: f64, achieved: f64 },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("Newton diverged after {iterations} iterations: residual {residual:e}")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("Newton did not converge in {max} iterations: residual {residual:e}")]
    NewtonMaxIterations { max: usize, residual: f64 },

    #[error("scalar mean-value solve failed: {0}")]
    ThetaSolve(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("QoI error denominator is indeterminate (|E_h| = {e_h:e} below noise floor)")]
    IndeterminateDenominator { e_h: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
