use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid convex set: {0}")]
    InvalidSet(String),

    #[error("point is {dist:e} outside the set, beyond activity tolerance {tol:e}")]
    NotOnSet { dist: f64, tol: f64 },

    #[error("reaction term returned a non-finite value at t={t}, x={x:?}, v={v:?}")]
    EvalFailure { t: f64, x: Vec<f64>, v: Vec<f64> },

    #[error("step t + h = {reach} reaches the horizon T = {horizon}")]
    HorizonExceeded { reach: f64, horizon: f64 },

    #[error("invalid step grid: {0}")]
    InvalidSteps(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("no grid point satisfies the strict inequality (largest observed gap {max_gap:e})")]
    NotFound { max_gap: f64 },

    #[error("oblique boundary data violates orthogonality at x={x:?}: {detail}")]
    ObliqueViolation { x: Vec<f64>, detail: String },

    #[error("solution blew up at t={t}: |f| = {magnitude:e}")]
    Instability { t: f64, magnitude: f64 },

    #[error("non-finite value in the field at t={t}")]
    NonFinite { t: f64 },

    #[error("interior node {0} has no outward normal")]
    InteriorPoint(usize),

    #[error("field value at node {0} lies inside the set")]
    InsideSet(usize),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
