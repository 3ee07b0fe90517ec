use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition (bad dimensions, values
    /// outside their domain, malformed cells, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An iterative solver diverged, hit its iteration cap, or produced
    /// non-finite intermediate values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The requested covariate moments cannot be matched by any reweighting
    /// of the source rows (targets outside the convex hull of the source).
    #[error("calibration infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
