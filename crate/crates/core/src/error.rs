use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {0} deviates from 1")]
    NonUnitQuaternion(f64),

    #[error("degenerate retraction step: |q + v| = {0:e}")]
    DegenerateStep(f64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("conditioning layout mismatch: model expects {expected}, got {got}")]
    LayoutMismatch { expected: String, got: String },

    #[error("strategy {0} requires a model that was not supplied")]
    MissingModel(String),

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::DegenerateStep(_) | Error::Planning(_) => 3,
            _ => 2,
        }
    }
}
