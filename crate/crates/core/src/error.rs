use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Every variant names the invariant that failed so that callers (and the
/// command-line front end) can report it without further context.
#[derive(Debug, Error)]
pub enum Error {
    #[error("class mismatch: {0}")]
    ClassMismatch(String),

    #[error("degenerate loop: {0}")]
    DegenerateLoop(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid time map: {0}")]
    InvalidMap(String),

    #[error("non-regularizable orbit: {0}")]
    NonRegularizable(String),

    #[error("empty safe region: every sample lies in a collision window")]
    AllCollision,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("Newton did not converge after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("singular Hessian (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("continuation stuck at parameter {at} after {accepted} accepted steps: {reason}")]
    ContinuationStuck {
        at: f64,
        accepted: usize,
        reason: String,
    },

    #[error("spectrum not bounded below: eigenvalue {eigenvalue} <= {bound}")]
    BoundedBelow { eigenvalue: f64, bound: f64 },

    #[error("kernel tracking failed at tau = {tau}: {reason}")]
    Tracking { tau: f64, reason: String },

    #[error("degenerate critical point (nullity {nullity}); the signed count is undefined")]
    DegeneratePoint { nullity: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
