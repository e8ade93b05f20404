use thiserror::Error;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: expected {expected} features, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid split ratio {0}: both sides must be non-empty")]
    InvalidRatio(f64),
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("singular design matrix; linearly dependent columns: {}", .columns.join(", "))]
    Singular { columns: Vec<String> },
    #[error("exact Shapley enumeration supports at most {max} features, got {got}")]
    Intractable { max: usize, got: usize },
    #[error("unsupported model document: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
