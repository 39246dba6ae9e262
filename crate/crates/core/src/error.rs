use thiserror::Error;

/// Errors produced by the mechanism, optimization and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("privacy level {0} must lie strictly between 0 and 1")]
    PrivacyLevel(String),

    #[error("cannot parse {0:?} as a rational number")]
    ParseRational(String),

    #[error("invalid prior: {0}")]
    Prior(String),

    #[error("invalid loss function: {0}")]
    Loss(String),

    #[error("response labels of the remap do not match the mechanism: {0}")]
    ResponseMismatch(String),

    #[error("enumeration needs {candidates} candidates, more than the limit of {limit}")]
    Capacity { candidates: String, limit: u64 },

    #[error("mechanism is not feasible: {0}")]
    Infeasible(String),

    #[error("constraint matrix is not a valid vertex structure: {0}")]
    Structure(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("degenerate database space: {0}")]
    DegenerateSpace(String),

    #[error("field {field}: {message}")]
    Field { field: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
