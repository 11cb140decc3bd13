use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid feature count M = {0}: must be even and at least 2")]
    InvalidFeatureCount(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid integration limits: a = {a} > b = {b}")]
    InvalidInterval { a: f64, b: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate event time at line {line}")]
    DuplicateTime { line: usize },

    #[error("invalid event sequence: {0}")]
    InvalidEvents(String),

    #[error(
        "factorization of (γ⁻¹I + Ξ) failed for γ = {gamma}: matrix is not numerically \
         positive definite (diagonal range {diag_min:.3e}..{diag_max:.3e}); try a smaller γ"
    )]
    Factorization { gamma: f64, diag_min: f64, diag_max: f64 },

    #[error("degenerate design: baseline denominator T − Fᵀ(γ⁻¹I + Ξ)⁻¹F = {0:.6e} is not positive")]
    DegenerateDesign(f64),

    #[error("cannot bound intensity for thinning: {0}")]
    UnboundedIntensity(String),

    #[error("simulation exceeded the event cap of {cap} at t = {time:.4} (runaway process?)")]
    RunawayProcess { cap: usize, time: f64 },

    #[error("validation window empty: no events after the split at t = {0}")]
    EmptyValidation(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
