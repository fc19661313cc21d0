use crate::rng::stream;
use crate::ModelError;
use atomgen_data::RunConfig;
use atomgen_nn::{
    adaln_block_forward, init_adaln_block, key_mask_bias, linear, sinusoidal_time_embedding,
    ParamStore, Real, Tape, TapeParams, Tensor, TransformerConfig, Var,
};
use serde::Serialize;

/// Class-conditioning rows of the label embedding table.
pub const CLASS_MOLECULE: usize = 0;
pub const CLASS_CRYSTAL: usize = 1;
/// The learned null label used for classifier-free guidance.
pub const CLASS_NULL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DitConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub latent_dim: usize,
    pub ff_mult: usize,
}

impl DitConfig {
    pub fn from_run_config(cfg: &RunConfig) -> Result<Self, ModelError> {
        let (d_model, n_heads, n_layers) = cfg.dit.resolve()?;
        Ok(DitConfig {
            d_model,
            n_heads,
            n_layers,
            latent_dim: cfg.vae.latent_dim,
            ff_mult: cfg.dit.ff_mult,
        })
    }

    pub fn transformer(&self) -> TransformerConfig {
        TransformerConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            ff_mult: self.ff_mult,
        }
    }
}

/// Class-conditional denoiser: input projection of concat(z_t, self_cond),
/// a stack of adaLN-Zero blocks conditioned on time + class embeddings, and
/// a zero-initialized modulated output head back to latent width.
pub struct DitModel<S: Real> {
    pub cfg: DitConfig,
    pub store: ParamStore<S>,
}

impl<S: Real> DitModel<S> {
    pub fn init(cfg: DitConfig, seed: u64) -> Self {
        let mut rng = stream(seed, "dit-init", 0);
        let mut store = ParamStore::new();
        let t = cfg.transformer();
        store.add_linear("in_proj", 2 * cfg.latent_dim, cfg.d_model, &mut rng);
        store.add_linear("time_mlp.fc1", cfg.d_model, cfg.d_model, &mut rng);
        store.add_linear("time_mlp.fc2", cfg.d_model, cfg.d_model, &mut rng);
        store.add_embedding("class_embed", 3, cfg.d_model, 0.02, &mut rng);
        for i in 0..t.n_layers {
            init_adaln_block(&mut store, &format!("blk.{i}"), &t, &mut rng);
        }
        store.add_linear_zero("final.mod", cfg.d_model, 2 * cfg.d_model);
        store.add_linear_zero("final.out", cfg.d_model, cfg.latent_dim);
        DitModel { cfg, store }
    }

    pub fn from_store(cfg: DitConfig, store: ParamStore<S>) -> Result<Self, ModelError> {
        if !store.contains("in_proj.w") {
            return Err(ModelError::CheckpointMismatch {
                reason: "store is not a denoiser parameter set".to_string(),
            });
        }
        let shape = store.get("in_proj.w").shape.clone();
        if shape != [2 * cfg.latent_dim, cfg.d_model] {
            return Err(ModelError::CheckpointMismatch {
                reason: format!(
                    "in_proj shape {:?} disagrees with config (latent {}, d_model {})",
                    shape, cfg.latent_dim, cfg.d_model
                ),
            });
        }
        Ok(DitModel { cfg, store })
    }
}

/// Inputs for one denoiser call. `self_cond` is the previous clean-latent
/// prediction (zeros when dropped or on the first pass).
pub struct DenoiserInput<'a, S: Real> {
    pub zt: &'a Tensor<S>,
    /// Per-sample times in [0, 1].
    pub t: &'a [f64],
    /// Per-sample class rows (CLASS_MOLECULE / CLASS_CRYSTAL / CLASS_NULL).
    pub class_ids: &'a [usize],
    pub self_cond: &'a Tensor<S>,
    pub pad_mask: &'a [bool],
}

/// Forward pass producing the predicted clean latents [B, N, d].
pub fn denoise<S: Real>(
    tape: &mut Tape<S>,
    params: &TapeParams,
    model: &DitModel<S>,
    input: &DenoiserInput<'_, S>,
) -> Var {
    let cfg = &model.cfg;
    let tcfg = cfg.transformer();
    let shape = input.zt.shape.clone();
    assert_eq!(shape.len(), 3, "zt must be [B, N, d]");
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    assert_eq!(d, cfg.latent_dim, "latent width mismatch");
    assert_eq!(input.t.len(), b);
    assert_eq!(input.class_ids.len(), b);
    assert_eq!(input.pad_mask.len(), b * n);

    let zt = tape.constant(input.zt.clone());
    let sc = tape.constant(input.self_cond.clone());
    let x = tape.concat_last(zt, sc);
    let mut h = linear(tape, params, "in_proj", x);

    // Conditioning vector: sinusoidal(t) -> MLP, plus the class embedding.
    let mut time_rows = Vec::with_capacity(b * cfg.d_model);
    for &t in input.t {
        time_rows.extend(sinusoidal_time_embedding::<S>(t, cfg.d_model).data);
    }
    let temb = tape.constant(Tensor::new(vec![b, cfg.d_model], time_rows));
    let th = linear(tape, params, "time_mlp.fc1", temb);
    let th = tape.silu(th);
    let th = linear(tape, params, "time_mlp.fc2", th);
    let cemb = tape.embedding(params.var("class_embed"), input.class_ids, &[b]);
    let cond = tape.add(th, cemb);

    let mask_bias = key_mask_bias(tape, input.pad_mask, b, n, tcfg.n_heads);
    for i in 0..tcfg.n_layers {
        h = adaln_block_forward(tape, params, &format!("blk.{i}"), h, cond, mask_bias, &tcfg);
    }

    // Final layer: modulated norm then zero-initialized projection, so a
    // fresh model predicts zeros independent of all conditioning.
    let act = tape.silu(cond);
    let modulation = linear(tape, params, "final.mod", act);
    let m2 = tape.reshape(modulation, vec![b, 2, cfg.d_model]);
    let pick = |tape: &mut Tape<S>, i: usize| -> Var {
        let mut mask = vec![S::zero(); b * 2 * cfg.d_model];
        for bi in 0..b {
            let base = (bi * 2 + i) * cfg.d_model;
            for v in mask[base..base + cfg.d_model].iter_mut() {
                *v = S::one();
            }
        }
        let mask = tape.constant(Tensor::new(vec![b, 2, cfg.d_model], mask));
        let picked = tape.mul(m2, mask);
        let flat = tape.sum_mid(picked);
        tape.broadcast_mid(flat, n)
    };
    let shift = pick(tape, 0);
    let scale = pick(tape, 1);
    let normed = tape.layer_norm_last(h, atomgen_nn::LAYER_NORM_EPS);
    let one_plus = tape.affine(scale, 1.0, 1.0);
    let scaled = tape.mul(normed, one_plus);
    let modded = tape.add(scaled, shift);
    linear(tape, params, "final.out", modded)
}

/// Frozen-parameter denoiser evaluation returning plain tensors.
pub fn denoise_frozen<S: Real>(
    model: &DitModel<S>,
    input: &DenoiserInput<'_, S>,
) -> Tensor<S> {
    let mut tape = Tape::new();
    let params = frozen_params(&mut tape, &model.store);
    let out = denoise(&mut tape, &params, model, input);
    tape.value(out).clone()
}

/// Load a parameter store onto a tape as constants (no gradients).
pub fn frozen_params<S: Real>(tape: &mut Tape<S>, store: &ParamStore<S>) -> TapeParams {
    let mut vars = Vec::with_capacity(store.len());
    let mut map = std::collections::HashMap::with_capacity(store.len());
    for (name, tensor) in store.iter() {
        let v = tape.constant(tensor.clone());
        map.insert(name.to_string(), v);
        vars.push(v);
    }
    TapeParams::from_parts(vars, map)
}
