use crate::{NnError, Real, Tape, TapeParams, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Additive logit penalty for padded attention keys; exp(-1e9) underflows to
/// an exact zero weight in both f32 and f64.
pub const MASK_BIAS: f64 = -1e9;

/// Shape of one transformer encoder stack. GELU inside blocks, x4 feedforward
/// by default; atoms are a set, so there is no positional encoding anywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_mult: usize,
}

impl TransformerConfig {
    pub fn new(d_model: usize, n_heads: usize, n_layers: usize) -> Result<Self, NnError> {
        let cfg = TransformerConfig {
            d_model,
            n_heads,
            n_layers,
            ff_mult: 4,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.ff_mult == 0 {
            return Err(NnError::Shape {
                reason: "transformer dims must be positive".to_string(),
            });
        }
        if self.d_model % self.n_heads != 0 {
            return Err(NnError::Shape {
                reason: format!(
                    "d_model {} not divisible by n_heads {}",
                    self.d_model, self.n_heads
                ),
            });
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

// ---- parameter registration ------------------------------------------

pub fn init_encoder<S: Real, R: Rng>(
    store: &mut crate::ParamStore<S>,
    prefix: &str,
    cfg: &TransformerConfig,
    rng: &mut R,
) {
    for layer in 0..cfg.n_layers {
        let p = format!("{prefix}.{layer}");
        store.add_layer_norm(&format!("{p}.ln1"), cfg.d_model);
        init_attention(store, &format!("{p}.attn"), cfg, rng);
        store.add_layer_norm(&format!("{p}.ln2"), cfg.d_model);
        init_mlp(store, &format!("{p}.mlp"), cfg, rng);
    }
    store.add_layer_norm(&format!("{prefix}.ln_out"), cfg.d_model);
}

pub fn init_attention<S: Real, R: Rng>(
    store: &mut crate::ParamStore<S>,
    prefix: &str,
    cfg: &TransformerConfig,
    rng: &mut R,
) {
    store.add_linear(&format!("{prefix}.wq"), cfg.d_model, cfg.d_model, rng);
    store.add_linear(&format!("{prefix}.wk"), cfg.d_model, cfg.d_model, rng);
    store.add_linear(&format!("{prefix}.wv"), cfg.d_model, cfg.d_model, rng);
    store.add_linear(&format!("{prefix}.wo"), cfg.d_model, cfg.d_model, rng);
}

pub fn init_mlp<S: Real, R: Rng>(
    store: &mut crate::ParamStore<S>,
    prefix: &str,
    cfg: &TransformerConfig,
    rng: &mut R,
) {
    let hidden = cfg.d_model * cfg.ff_mult;
    store.add_linear(&format!("{prefix}.fc1"), cfg.d_model, hidden, rng);
    store.add_linear(&format!("{prefix}.fc2"), hidden, cfg.d_model, rng);
}

/// adaLN block: layer norms carry no affine parameters; the modulation MLP
/// (silu + zero-initialized linear to 6 * d_model) supplies shift/scale/gate
/// for both sub-layers, so a fresh block is the identity map.
pub fn init_adaln_block<S: Real, R: Rng>(
    store: &mut crate::ParamStore<S>,
    prefix: &str,
    cfg: &TransformerConfig,
    rng: &mut R,
) {
    init_attention(store, &format!("{prefix}.attn"), cfg, rng);
    init_mlp(store, &format!("{prefix}.mlp"), cfg, rng);
    store.add_linear_zero(&format!("{prefix}.mod"), cfg.d_model, 6 * cfg.d_model);
}

// ---- forward passes ----------------------------------------------------

/// `{name}.w` matmul plus `{name}.b` bias.
pub fn linear<S: Real>(tape: &mut Tape<S>, params: &TapeParams, name: &str, x: Var) -> Var {
    let y = tape.matmul(x, params.var(&format!("{name}.w")));
    tape.add_bias(y, params.var(&format!("{name}.b")))
}

fn layer_norm_affine<S: Real>(
    tape: &mut Tape<S>,
    params: &TapeParams,
    name: &str,
    x: Var,
) -> Var {
    let normed = tape.layer_norm_last(x, LAYER_NORM_EPS);
    let scaled = tape.mul_bias(normed, params.var(&format!("{name}.g")));
    tape.add_bias(scaled, params.var(&format!("{name}.b")))
}

/// Additive attention bias from the pad mask: 0 for real keys, -1e9 for pads,
/// shaped [B*H, N, N] to line up with the per-head score matrix.
pub fn key_mask_bias<S: Real>(
    tape: &mut Tape<S>,
    pad_mask: &[bool],
    batch: usize,
    n: usize,
    n_heads: usize,
) -> Var {
    assert_eq!(pad_mask.len(), batch * n);
    let mut data = vec![S::zero(); batch * n_heads * n * n];
    let bias = S::from_f64(MASK_BIAS);
    for b in 0..batch {
        for h in 0..n_heads {
            for q in 0..n {
                let base = (((b * n_heads) + h) * n + q) * n;
                for k in 0..n {
                    if !pad_mask[b * n + k] {
                        data[base + k] = bias;
                    }
                }
            }
        }
    }
    tape.constant(Tensor::new(vec![batch * n_heads, n, n], data))
}

/// Multi-head self-attention over the atom axis. `mask_bias` comes from
/// [`key_mask_bias`]; padded keys receive zero attention weight, which keeps
/// padded inputs from influencing any unpadded output.
pub fn attention<S: Real>(
    tape: &mut Tape<S>,
    params: &TapeParams,
    prefix: &str,
    x: Var,
    mask_bias: Var,
    cfg: &TransformerConfig,
) -> Var {
    let shape = tape.shape(x).to_vec();
    assert_eq!(shape.len(), 3, "attention input must be [B, N, D]");
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    assert_eq!(d, cfg.d_model);
    let (h, hd) = (cfg.n_heads, cfg.head_dim());

    let split = |tape: &mut Tape<S>, v: Var| {
        let r = tape.reshape(v, vec![b, n, h, hd]);
        let p = tape.permute_0213(r);
        tape.reshape(p, vec![b * h, n, hd])
    };
    let q = linear(tape, params, &format!("{prefix}.wq"), x);
    let k = linear(tape, params, &format!("{prefix}.wk"), x);
    let v = linear(tape, params, &format!("{prefix}.wv"), x);
    let q = split(tape, q);
    let k = split(tape, k);
    let v = split(tape, v);

    let scores = tape.bmm_nt(q, k);
    let scores = tape.scale(scores, 1.0 / (hd as f64).sqrt());
    let scores = tape.add(scores, mask_bias);
    let weights = tape.softmax_last(scores);
    let ctx = tape.bmm_nn(weights, v);

    let ctx = tape.reshape(ctx, vec![b, h, n, hd]);
    let ctx = tape.permute_0213(ctx);
    let ctx = tape.reshape(ctx, vec![b, n, d]);
    linear(tape, params, &format!("{prefix}.wo"), ctx)
}

fn mlp<S: Real>(tape: &mut Tape<S>, params: &TapeParams, prefix: &str, x: Var) -> Var {
    let h = linear(tape, params, &format!("{prefix}.fc1"), x);
    let h = tape.gelu(h);
    linear(tape, params, &format!("{prefix}.fc2"), h)
}

/// Pre-norm encoder stack with a closing layer norm. Permutation-equivariant
/// over atoms and pad-correct by construction.
pub fn encoder_forward<S: Real>(
    tape: &mut Tape<S>,
    params: &TapeParams,
    prefix: &str,
    x: Var,
    mask_bias: Var,
    cfg: &TransformerConfig,
) -> Var {
    let mut h = x;
    for layer in 0..cfg.n_layers {
        let p = format!("{prefix}.{layer}");
        let normed = layer_norm_affine(tape, params, &format!("{p}.ln1"), h);
        let att = attention(tape, params, &format!("{p}.attn"), normed, mask_bias, cfg);
        h = tape.add(h, att);
        let normed = layer_norm_affine(tape, params, &format!("{p}.ln2"), h);
        let ff = mlp(tape, params, &format!("{p}.mlp"), normed);
        h = tape.add(h, ff);
    }
    layer_norm_affine(tape, params, &format!("{prefix}.ln_out"), h)
}

/// One adaLN-conditioned block. `cond` is the per-sample conditioning vector
/// [B, d_model]; its silu + zero-init projection yields
/// (shift_a, scale_a, gate_a, shift_m, scale_m, gate_m). With fresh
/// parameters all six are zero and the block is exactly the identity.
pub fn adaln_block_forward<S: Real>(
    tape: &mut Tape<S>,
    params: &TapeParams,
    prefix: &str,
    h: Var,
    cond: Var,
    mask_bias: Var,
    cfg: &TransformerConfig,
) -> Var {
    let shape = tape.shape(h).to_vec();
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    assert_eq!(d, cfg.d_model);
    assert_eq!(tape.shape(cond), &[b, d], "cond must be [B, d_model]");

    let act = tape.silu(cond);
    let modulation = linear(tape, params, &format!("{prefix}.mod"), act); // [B, 6D]
    let m3 = tape.reshape(modulation, vec![b, 6, d]);
    let chunk = |tape: &mut Tape<S>, i: usize| -> Var {
        let picked = slice_mid(tape, m3, i);
        tape.broadcast_mid(picked, n)
    };
    let shift_a = chunk(tape, 0);
    let scale_a = chunk(tape, 1);
    let gate_a = chunk(tape, 2);
    let shift_m = chunk(tape, 3);
    let scale_m = chunk(tape, 4);
    let gate_m = chunk(tape, 5);

    let modulate = |tape: &mut Tape<S>, x: Var, shift: Var, scale: Var| -> Var {
        let one_plus = tape.affine(scale, 1.0, 1.0);
        let scaled = tape.mul(x, one_plus);
        tape.add(scaled, shift)
    };

    let normed = tape.layer_norm_last(h, LAYER_NORM_EPS);
    let modded = modulate(tape, normed, shift_a, scale_a);
    let att = attention(tape, params, &format!("{prefix}.attn"), modded, mask_bias, cfg);
    let gated = tape.mul(gate_a, att);
    let h = tape.add(h, gated);

    let normed = tape.layer_norm_last(h, LAYER_NORM_EPS);
    let modded = modulate(tape, normed, shift_m, scale_m);
    let ff = mlp(tape, params, &format!("{prefix}.mlp"), modded);
    let gated = tape.mul(gate_m, ff);
    tape.add(h, gated)
}

/// Select row `i` from the middle axis of a [B, M, D] tensor -> [B, D].
/// Composed from existing ops: multiply by a one-hot mid mask and sum.
fn slice_mid<S: Real>(tape: &mut Tape<S>, x: Var, i: usize) -> Var {
    let shape = tape.shape(x).to_vec();
    let (b, m, d) = (shape[0], shape[1], shape[2]);
    let mut mask = vec![S::zero(); b * m * d];
    for bi in 0..b {
        let base = (bi * m + i) * d;
        for v in mask[base..base + d].iter_mut() {
            *v = S::one();
        }
    }
    let mask = tape.constant(Tensor::new(vec![b, m, d], mask));
    let picked = tape.mul(x, mask);
    tape.sum_mid(picked)
}

/// Sinusoidal embedding of a scalar time in [0, 1]: interleaved
/// sin/cos pairs over a geometric frequency ladder from 1 to 1000.
/// Deterministic; distinct times give distinct embeddings.
pub fn sinusoidal_time_embedding<S: Real>(t: f64, dim: usize) -> Tensor<S> {
    assert!(dim >= 2 && dim % 2 == 0, "time embedding dim must be even");
    let half = dim / 2;
    let mut data = Vec::with_capacity(dim);
    for j in 0..half {
        let exponent = if half > 1 {
            j as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let freq = 1000f64.powf(exponent);
        data.push(S::from_f64((t * freq).sin()));
        data.push(S::from_f64((t * freq).cos()));
    }
    Tensor::new(vec![dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> TransformerConfig {
        TransformerConfig::new(16, 4, 2).unwrap()
    }

    fn rand_input(b: usize, n: usize, d: usize, seed: u64) -> Tensor<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            vec![b, n, d],
            (0..b * n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        assert!(TransformerConfig::new(10, 3, 1).is_err());
    }

    #[test]
    fn encoder_single_atom_is_finite() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        init_encoder(&mut store, "enc", &cfg, &mut rng);
        let mut tape = Tape::new();
        let params = store.load(&mut tape);
        let x = tape.constant(rand_input(1, 1, 16, 1));
        let mask = key_mask_bias(&mut tape, &[true], 1, 1, cfg.n_heads);
        let y = encoder_forward(&mut tape, &params, "enc", x, mask, &cfg);
        assert!(tape.value(y).is_finite());
        assert_eq!(tape.shape(y), &[1, 1, 16]);
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::<f64>::new();
        init_encoder(&mut store, "enc", &cfg, &mut rng);
        let input = rand_input(1, 5, 16, 3);
        let perm = [3usize, 0, 4, 1, 2];

        let run = |inp: &Tensor<f64>, mask: &[bool]| {
            let mut tape = Tape::new();
            let params = store.load(&mut tape);
            let x = tape.constant(inp.clone());
            let m = key_mask_bias(&mut tape, mask, 1, 5, cfg.n_heads);
            let y = encoder_forward(&mut tape, &params, "enc", x, m, &cfg);
            tape.value(y).data.clone()
        };

        let mask = [true, true, true, true, false];
        let base = run(&input, &mask);

        let mut permuted = input.clone();
        let mut pmask = [false; 5];
        for (dst, &src) in perm.iter().enumerate() {
            pmask[dst] = mask[src];
            for k in 0..16 {
                permuted.data[dst * 16 + k] = input.data[src * 16 + k];
            }
        }
        let permuted_out = run(&permuted, &pmask);
        for (dst, &src) in perm.iter().enumerate() {
            for k in 0..16 {
                let diff = (permuted_out[dst * 16 + k] - base[src * 16 + k]).abs();
                assert!(diff < 1e-6, "row {dst}/{src} diff {diff}");
            }
        }
    }

    #[test]
    fn padded_rows_cannot_leak_into_real_outputs() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::<f64>::new();
        init_encoder(&mut store, "enc", &cfg, &mut rng);
        let mask = [true, true, true, false, false];

        let run = |inp: &Tensor<f64>| {
            let mut tape = Tape::new();
            let params = store.load(&mut tape);
            let x = tape.constant(inp.clone());
            let m = key_mask_bias(&mut tape, &mask, 1, 5, cfg.n_heads);
            let y = encoder_forward(&mut tape, &params, "enc", x, m, &cfg);
            tape.value(y).data.clone()
        };

        let input = rand_input(1, 5, 16, 5);
        let base = run(&input);
        let mut poked = input.clone();
        for k in 0..16 {
            poked.data[3 * 16 + k] += 37.5;
            poked.data[4 * 16 + k] -= 11.25;
        }
        let out = run(&poked);
        for row in 0..3 {
            for k in 0..16 {
                let diff = (out[row * 16 + k] - base[row * 16 + k]).abs();
                assert!(diff < 1e-7, "padded perturbation leaked: {diff}");
            }
        }
    }

    #[test]
    fn adaln_block_is_identity_at_init() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::<f64>::new();
        init_adaln_block(&mut store, "blk", &cfg, &mut rng);
        let mut tape = Tape::new();
        let params = store.load(&mut tape);
        let input = rand_input(2, 4, 16, 7);
        let x = tape.constant(input.clone());
        let cond = tape.constant(rand_input(1, 2, 16, 8).reshaped(vec![2, 16]));
        let mask = key_mask_bias(&mut tape, &[true; 8], 2, 4, cfg.n_heads);
        let y = adaln_block_forward(&mut tape, &params, "blk", x, cond, mask, &cfg);
        assert_eq!(tape.value(y).data, input.data, "zero-gated block must be identity");
    }

    #[test]
    fn adaln_block_reacts_to_conditioning_once_trained() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::<f64>::new();
        init_adaln_block(&mut store, "blk", &cfg, &mut rng);
        // Nudge the modulation weights off zero, as one optimizer step would.
        {
            use rand::Rng;
            let mut r2 = ChaCha8Rng::seed_from_u64(10);
            let idx = store.iter().position(|(n, _)| n == "blk.mod.w").unwrap();
            for v in store.tensor_at_mut(idx).data.iter_mut() {
                *v = r2.random_range(-0.05..0.05);
            }
        }
        let input = rand_input(1, 3, 16, 11);
        let run = |cond: Tensor<f64>| {
            let mut tape = Tape::new();
            let params = store.load(&mut tape);
            let x = tape.constant(input.clone());
            let c = tape.constant(cond);
            let mask = key_mask_bias(&mut tape, &[true; 3], 1, 3, cfg.n_heads);
            let y = adaln_block_forward(&mut tape, &params, "blk", x, c, mask, &cfg);
            tape.value(y).data.clone()
        };
        let a = run(Tensor::full(vec![1, 16], 0.5));
        let b = run(Tensor::full(vec![1, 16], -0.5));
        let max_diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 1e-6, "conditioning had no effect: {max_diff}");
    }

    #[test]
    fn time_embedding_basics() {
        let e0: Tensor<f64> = sinusoidal_time_embedding(0.0, 8);
        for pair in e0.data.chunks(2) {
            assert_eq!(pair[0], 0.0, "sin(0)");
            assert_eq!(pair[1], 1.0, "cos(0)");
        }
        let a: Tensor<f64> = sinusoidal_time_embedding(0.37, 16);
        let b: Tensor<f64> = sinusoidal_time_embedding(0.37, 16);
        assert_eq!(a.data, b.data);
        let t1: Tensor<f64> = sinusoidal_time_embedding(0.1, 16);
        let t5: Tensor<f64> = sinusoidal_time_embedding(0.5, 16);
        let t9: Tensor<f64> = sinusoidal_time_embedding(0.9, 16);
        assert_ne!(t1.data, t5.data);
        assert_ne!(t5.data, t9.data);
        assert_ne!(t1.data, t9.data);
    }

    #[test]
    fn time_embedding_similarity_decays_locally() {
        // In the lowest frequency band, cosine similarity shrinks with |dt|.
        let sim = |a: &Tensor<f64>, b: &Tensor<f64>| {
            let dot: f64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
            let na: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.data.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let base: Tensor<f64> = sinusoidal_time_embedding(0.5, 2);
        let mut last = 1.0;
        for k in 1..=5 {
            let other: Tensor<f64> = sinusoidal_time_embedding(0.5 + 0.05 * k as f64, 2);
            let s = sim(&base, &other);
            assert!(s < last, "similarity should fall: {s} vs {last}");
            last = s;
        }
    }
}
