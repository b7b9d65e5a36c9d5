use thiserror::Error;

pub type Result<T> = std::result::Result<T, QvixError>;

#[derive(Debug, Error)]
pub enum QvixError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left} nodes vs {right} nodes")]
    GridMismatch { left: usize, right: usize },

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("active set iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    ViNoConvergence {
        iterations: usize,
        residual: f64,
        last: Box<Vec<f64>>,
    },

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("inner temperature solve failed after {iterations} iterations (residual {residual:.3e}, contraction factor {contraction:.3})")]
    InnerSolve {
        iterations: usize,
        residual: f64,
        contraction: f64,
    },

    #[error("temperature bound violated: |T|_V = {norm:.6e} > {bound:.6e}")]
    TemperatureBound { norm: f64, bound: f64 },

    #[error("monotonicity violated at iteration {iteration}: worst node delta {delta:.3e}")]
    NotMonotone { iteration: usize, delta: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {last_step:.3e}, tail contraction {contraction:?})")]
    FixedPointNoConvergence {
        iterations: usize,
        last_step: f64,
        contraction: Option<f64>,
    },

    #[error("residual {residual:.3e} exceeds tolerance {tol:.3e}: {context}")]
    ResidualTooLarge {
        residual: f64,
        tol: f64,
        context: String,
    },

    #[error("direction sign restriction violated: {0}")]
    SignRestriction(String),

    #[error("invalid bracket: {0}")]
    InvalidBracket(String),
}
