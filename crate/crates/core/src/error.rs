use thiserror::Error;

/// Errors raised by the biclustering engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SibError {
    #[error("family {0} has no cumulant function and cannot be used as a likelihood")]
    InvalidFamily(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure at iteration {iteration} ({stage}): {detail}")]
    Numerical {
        iteration: usize,
        stage: String,
        detail: String,
    },
    #[error("search failed: every candidate fit failed ({0})")]
    SearchFailure(String),
    #[error("model selection failed: {0}")]
    Selection(String),
}

pub type Result<T> = std::result::Result<T, SibError>;

impl SibError {
    pub(crate) fn numerical(iteration: usize, stage: &str, detail: impl Into<String>) -> Self {
        SibError::Numerical {
            iteration,
            stage: stage.to_string(),
            detail: detail.into(),
        }
    }
}
