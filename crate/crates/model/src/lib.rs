//! Two-stage generative pipeline over atomic systems: a transformer VAE with
//! domain-weighted reconstruction losses (stage 1), a flow-matching DiT
//! denoiser over the frozen VAE's latents (stage 2), and the
//! classifier-free-guidance Euler sampler with split decoding.
//!
//! Training is single-writer over parameters; evaluation and sampling with
//! frozen weights parallelize freely over inputs.

mod batch_tensors;
mod dit;
mod error;
mod flow;
pub mod rng;
mod sampler;
mod vae;

pub use batch_tensors::BatchTensors;
pub use dit::{
    denoise, denoise_frozen, frozen_params, DenoiserInput, DitConfig, DitModel, CLASS_CRYSTAL,
    CLASS_MOLECULE, CLASS_NULL,
};
pub use error::ModelError;
pub use flow::{
    fm_loss, interpolate, sample_base_latents, sample_time, save_dit_checkpoint, DiffusionBatch,
    target_vector_field, train_dit, zero_center_latents, DitTrainLogEntry, DitTrainOutcome,
};
pub use sampler::{
    cfg_combine, euler_step, outcomes_to_records, sample, AtomCountSource,
    SampleOutcome, SamplingSpec,
};
pub use vae::{
    argmax_element, decode, denoising_corrupt, encode, export_latents, kl_penalty,
    reconstruct_records, reconstruction_loss, sample_latent_noise, save_vae_checkpoint, train_vae,
    LatentRow,
    DecoderOutput, EncoderOutput, LatentNoise, LossBreakdown, LossWeights, Reconstruction,
    TrainLogEntry, VaeConfig, VaeModel, VaeTrainOutcome,
};
