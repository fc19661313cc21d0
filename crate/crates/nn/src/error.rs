use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {reason}")]
    Shape { reason: String },

    #[error("non-finite gradient in parameter {name} (step {step})")]
    NonFiniteGrad { name: String, step: u64 },

    #[error("checkpoint error: {reason}")]
    Checkpoint { reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
