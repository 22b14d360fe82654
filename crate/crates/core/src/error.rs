use thiserror::Error;

use crate::model::ExampleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generation failed: {0}")]
    Generation(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("search budget of {budget} nodes exhausted")]
    BudgetExceeded { budget: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot expand representation: {0}")]
    Expansion(String),

    #[error("protocol violation at {example}: {detail}")]
    Protocol { example: ExampleId, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
