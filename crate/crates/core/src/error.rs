use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    #[error("truncation not converged: {0}")]
    Convergence(String),

    #[error("singular arc detected at t = {time}: switching function below {threshold:e}")]
    SingularArc { time: f64, threshold: f64 },

    #[error("integration blew up at t = {0}")]
    BlowUp(f64),

    #[error("shooting Jacobian is rank deficient ({0}); try landscape_scan for a better initial adjoint")]
    RankDeficient(String),

    #[error("time-optimal solution has more than two bangs when |delta| >= u0 (delta = {delta}, u0 = {u0})")]
    OutOfRegime { delta: f64, u0: f64 },

    #[error("degenerate adjoint: {0}")]
    DegenerateAdjoint(String),

    #[error("not a descent direction (directional derivative {0:e})")]
    Direction(f64),

    #[error("objective returned a non-finite value at {0:?}")]
    Objective(Vec<f64>),

    #[error("degenerate linear system: {0}")]
    Degeneracy(String),
}
