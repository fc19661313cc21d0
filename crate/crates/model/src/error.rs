use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("geometry error: {0}")]
    Geom(#[from] atomgen_geom::GeomError),

    #[error("data error: {0}")]
    Data(#[from] atomgen_data::DataError),

    #[error("engine error: {0}")]
    Nn(#[from] atomgen_nn::NnError),

    #[error("non-finite loss at step {step}: {diagnostics}")]
    NonFiniteLoss { step: u64, diagnostics: String },

    #[error("non-finite latents at integration step {step}")]
    NonFiniteLatents { step: usize },

    #[error("checkpoint mismatch: {reason}")]
    CheckpointMismatch { reason: String },

    #[error("invalid sampling spec: {reason}")]
    BadSamplingSpec { reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
