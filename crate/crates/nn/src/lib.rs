//! Minimal differentiable building blocks on a tape-based reverse-mode
//! engine: dense layers, masked multi-head attention, pre-norm encoder
//! stacks, adaLN-Zero conditioned blocks, sinusoidal time embeddings, AdamW,
//! EMA, a finite-difference gradient checker, and the checkpoint format.
//!
//! Everything is generic over [`Real`]; training runs in `f32` and gradient
//! checks instantiate the identical code in `f64`. Forward passes over
//! distinct inputs with shared frozen parameters are safe in parallel;
//! parameter updates are single-writer.

mod checkpoint;
mod error;
mod gradcheck;
pub mod layers;
mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointData, Manifest, SetManifest, TensorMeta};
pub use error::NnError;
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{
    adaln_block_forward, attention, encoder_forward, init_adaln_block, init_attention,
    init_encoder, init_mlp, key_mask_bias, linear, sinusoidal_time_embedding, TransformerConfig,
    LAYER_NORM_EPS, MASK_BIAS,
};
pub use optim::{AdamW, Ema};
pub use params::{ParamStore, TapeParams};
pub use scalar::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
