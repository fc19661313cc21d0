use crate::batch_tensors::BatchTensors;
use crate::rng::{gaussian, stream};
use crate::ModelError;
use atomgen_data::{make_batches, Batch, ClassLabel, DatasetRecord, RunConfig};
use atomgen_geom::{augment, cart_to_frac, wrap_fractional, MASK_INDEX, VOCAB_SIZE};
use atomgen_nn::{
    encoder_forward, init_encoder, key_mask_bias, linear, AdamW, CheckpointData, ParamStore, Real,
    Tape, TapeParams, Tensor, TransformerConfig, Var,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

/// The five reconstruction-loss coefficients keyed by periodicity:
/// (lambda_A, lambda_X, lambda_F, lambda_Ll, lambda_La).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub periodic: [f64; 5],
    pub non_periodic: [f64; 5],
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            periodic: [1.0, 0.0, 10.0, 1.0, 10.0],
            non_periodic: [1.0, 10.0, 0.0, 0.0, 0.0],
        }
    }
}

impl LossWeights {
    pub fn row(&self, class: ClassLabel) -> [f64; 5] {
        match class {
            ClassLabel::Crystal => self.periodic,
            ClassLabel::Molecule => self.non_periodic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VaeConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub latent_dim: usize,
    pub ff_mult: usize,
}

impl VaeConfig {
    pub fn from_run_config(cfg: &RunConfig) -> Self {
        VaeConfig {
            d_model: cfg.vae.d_model,
            n_heads: cfg.vae.n_heads,
            n_layers: cfg.vae.n_layers,
            latent_dim: cfg.vae.latent_dim,
            ff_mult: cfg.vae.ff_mult,
        }
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

/// Stage-1 autoencoder: per-atom type/coordinate projections feeding a
/// transformer encoder, a d-dimensional latent bottleneck, and a decoder
/// with four output heads plus the pooled lattice head.
pub struct VaeModel<S: Real> {
    pub cfg: VaeConfig,
    pub store: ParamStore<S>,
}

impl<S: Real> VaeModel<S> {
    pub fn init(cfg: VaeConfig, seed: u64) -> Self {
        let mut rng = stream(seed, "vae-init", 0);
        let mut store = ParamStore::new();
        let t = cfg.transformer();
        let d = cfg.d_model;
        store.add_embedding("type_embed", VOCAB_SIZE, d, 0.02, &mut rng);
        store.add_linear("cart_proj.fc1", 3, d, &mut rng);
        store.add_linear("cart_proj.fc2", d, d, &mut rng);
        store.add_linear("frac_proj.fc1", 3, d, &mut rng);
        store.add_linear("frac_proj.fc2", d, d, &mut rng);
        init_encoder(&mut store, "enc", &t, &mut rng);
        store.add_linear("mu_head", d, cfg.latent_dim, &mut rng);
        store.add_linear("logsig_head", d, cfg.latent_dim, &mut rng);
        store.add_linear("dec_in", cfg.latent_dim, d, &mut rng);
        init_encoder(&mut store, "dec", &t, &mut rng);
        store.add_linear("type_head", d, VOCAB_SIZE, &mut rng);
        store.add_linear("cart_head", d, 3, &mut rng);
        store.add_linear("frac_head", d, 3, &mut rng);
        store.add_linear("len_head", d, 3, &mut rng);
        store.add_linear("ang_head", d, 3, &mut rng);
        VaeModel { cfg, store }
    }

    pub fn from_store(cfg: VaeConfig, store: ParamStore<S>) -> Result<Self, ModelError> {
        if !store.contains("mu_head.w") {
            return Err(ModelError::CheckpointMismatch {
                reason: "store is not a VAE parameter set".to_string(),
            });
        }
        let d = store.get("mu_head.w").shape.clone();
        if d != [cfg.d_model, cfg.latent_dim] {
            return Err(ModelError::CheckpointMismatch {
                reason: format!(
                    "mu_head shape {:?} disagrees with config ({}, {})",
                    d, cfg.d_model, cfg.latent_dim
                ),
            });
        }
        Ok(VaeModel { cfg, store })
    }
}

/// How the reparameterized latent draw is produced.
pub enum LatentNoise<'a, S: Real> {
    /// z = mu (evaluation / reconstruction-metric mode).
    Deterministic,
    /// eps ~ N(0,1) per real atom from the given stream.
    Sample(&'a mut ChaCha8Rng),
    /// Caller-supplied eps (frozen noise for gradient checks).
    Fixed(&'a Tensor<S>),
}

pub struct EncoderOutput {
    pub mu: Var,
    pub log_sigma: Var,
    pub z: Var,
}

pub struct DecoderOutput {
    pub atom_logits: Var,
    pub cart_pred: Var,
    pub frac_pred: Var,
    pub lengths_pred: Var,
    pub angles_pred: Var,
}

/// Per-atom input projection stack shared by both coordinate channels:
/// embedding + Linear(Swish(Linear(x))) added into h. Molecules feed the
/// zero frac sentinel through the same projection.
fn input_stage<S: Real>(
    tape: &mut Tape<S>,
    params: &TapeParams,
    bt: &BatchTensors<S>,
) -> Var {
    let h = tape.embedding(
        params.var("type_embed"),
        &bt.atom_types,
        &[bt.b, bt.n],
    );
    let cart = tape.constant(bt.cart.clone());
    let c = linear(tape, params, "cart_proj.fc1", cart);
    let c = tape.silu(c);
    let c = linear(tape, params, "cart_proj.fc2", c);
    let h = tape.add(h, c);
    let frac = tape.constant(bt.frac.clone());
    let f = linear(tape, params, "frac_proj.fc1", frac);
    let f = tape.silu(f);
    let f = linear(tape, params, "frac_proj.fc2", f);
    tape.add(h, f)
}

/// Build the eps tensor for the reparameterized draw: N(0,1) on real atoms,
/// zeros on padding.
pub fn sample_latent_noise<S: Real>(
    b: usize,
    n: usize,
    d: usize,
    pad_mask: &[bool],
    rng: &mut ChaCha8Rng,
) -> Tensor<S> {
    let mut data = vec![S::zero(); b * n * d];
    for (row, &real) in pad_mask.iter().enumerate() {
        if real {
            for v in data[row * d..(row + 1) * d].iter_mut() {
                *v = S::from_f64(gaussian(rng));
            }
        }
    }
    Tensor::new(vec![b, n, d], data)
}

pub fn encode<S: Real>(
    tape: &mut Tape<S>,
    params: &TapeParams,
    model: &VaeModel<S>,
    bt: &BatchTensors<S>,
    noise: LatentNoise<'_, S>,
) -> EncoderOutput {
    let tcfg = model.cfg.transformer();
    let h = input_stage(tape, params, bt);
    let mask_bias = key_mask_bias(tape, &bt.pad_mask, bt.b, bt.n, tcfg.n_heads);
    let h = encoder_forward(tape, params, "enc", h, mask_bias, &tcfg);
    let mu = linear(tape, params, "mu_head", h);
    let log_sigma = linear(tape, params, "logsig_head", h);
    let z = match noise {
        LatentNoise::Deterministic => mu,
        LatentNoise::Sample(rng) => {
            let eps = sample_latent_noise(bt.b, bt.n, model.cfg.latent_dim, &bt.pad_mask, rng);
            let eps = tape.constant(eps);
            let sigma = tape.exp(log_sigma);
            let scaled = tape.mul(sigma, eps);
            tape.add(mu, scaled)
        }
        LatentNoise::Fixed(eps) => {
            let eps = tape.constant(eps.clone());
            let sigma = tape.exp(log_sigma);
            let scaled = tape.mul(sigma, eps);
            tape.add(mu, scaled)
        }
    };
    EncoderOutput { mu, log_sigma, z }
}

pub fn decode<S: Real>(
    tape: &mut Tape<S>,
    params: &TapeParams,
    model: &VaeModel<S>,
    z: Var,
    pad_mask: &[bool],
    n_atoms: &[usize],
) -> DecoderOutput {
    let tcfg = model.cfg.transformer();
    let shape = tape.shape(z).to_vec();
    let (b, n) = (shape[0], shape[1]);
    let h = linear(tape, params, "dec_in", z);
    let mask_bias = key_mask_bias(tape, pad_mask, b, n, tcfg.n_heads);
    let h = encoder_forward(tape, params, "dec", h, mask_bias, &tcfg);

    let atom_logits = linear(tape, params, "type_head", h);
    let cart_pred = linear(tape, params, "cart_head", h);
    let frac_pred = linear(tape, params, "frac_head", h);

    // Lattice head input: mean of h over real atoms only.
    let d = model.cfg.d_model;
    let mut mask = vec![S::zero(); b * n * d];
    for (row, &real) in pad_mask.iter().enumerate() {
        if real {
            for v in mask[row * d..(row + 1) * d].iter_mut() {
                *v = S::one();
            }
        }
    }
    let mask = tape.constant(Tensor::new(vec![b, n, d], mask));
    let masked = tape.mul(h, mask);
    let summed = tape.sum_mid(masked);
    let mut inv = vec![S::zero(); b * d];
    for bi in 0..b {
        let v = S::from_f64(1.0 / n_atoms[bi] as f64);
        for k in 0..d {
            inv[bi * d + k] = v;
        }
    }
    let inv = tape.constant(Tensor::new(vec![b, d], inv));
    let pooled = tape.mul(summed, inv);
    let lengths_pred = linear(tape, params, "len_head", pooled);
    let angles_pred = linear(tape, params, "ang_head", pooled);

    DecoderOutput {
        atom_logits,
        cart_pred,
        frac_pred,
        lengths_pred,
        angles_pred,
    }
}

/// Per-term reconstruction losses, each a [B] vector on the tape, plus the
/// class-weighted scalar total (batch mean).
pub struct LossBreakdown {
    pub types: Var,
    pub cart: Var,
    pub frac: Var,
    pub lattice_lengths: Var,
    pub lattice_angles: Var,
    pub total: Var,
}

pub fn reconstruction_loss<S: Real>(
    tape: &mut Tape<S>,
    target: &BatchTensors<S>,
    out: &DecoderOutput,
    weights: &LossWeights,
) -> LossBreakdown {
    let (b, n) = (target.b, target.n);
    let inv_n: Vec<f64> = target.n_atoms.iter().map(|&na| 1.0 / na as f64).collect();

    // L_A: masked mean cross-entropy per sample.
    let flat_logits = tape.reshape(out.atom_logits, vec![b * n, VOCAB_SIZE]);
    let types = tape.cross_entropy_rows(
        flat_logits,
        &target.atom_types,
        &target.pad_mask,
        n,
        &inv_n,
    );

    let mask3 = tape.constant(target.mask_expanded(3));
    let inv3n = tape.constant(target.per_sample(1, |na, _| 1.0 / (3.0 * na as f64)));

    // L_X on zero-centered coordinates (real atoms define the centroid).
    let center = |tape: &mut Tape<S>, x: Var| -> Var {
        let masked = tape.mul(x, mask3);
        let sums = tape.sum_mid(masked); // [B, 3]
        let inv = tape.constant(target.per_sample(3, |na, _| 1.0 / na as f64));
        let mean = tape.mul(sums, inv);
        let mean = tape.broadcast_mid(mean, n);
        tape.sub(x, mean)
    };
    let cart_true = tape.constant(target.cart.clone());
    let ct = center(tape, cart_true);
    let cp = center(tape, out.cart_pred);
    let cart = masked_sq_per_sample(tape, cp, ct, mask3, inv3n);

    // L_F: plain masked MSE.
    let frac_true = tape.constant(target.frac.clone());
    let frac = masked_sq_per_sample(tape, out.frac_pred, frac_true, mask3, inv3n);

    // L_Ll: both sides scaled by N^(-1/3), mean over the three lengths.
    let len_true = tape.constant(target.lengths.clone());
    let dlen = tape.sub(out.lengths_pred, len_true);
    let nscale = tape.constant(target.per_sample(3, |na, _| 1.0 / (na as f64).cbrt()));
    let dlen = tape.mul(dlen, nscale);
    let sq = tape.mul(dlen, dlen);
    let sum = tape.sum_last(sq);
    let lattice_lengths = tape.scale(sum, 1.0 / 3.0);

    // L_La in radians.
    let ang_true = tape.constant(target.angles_rad.clone());
    let dang = tape.sub(out.angles_pred, ang_true);
    let sq = tape.mul(dang, dang);
    let sum = tape.sum_last(sq);
    let lattice_angles = tape.scale(sum, 1.0 / 3.0);

    // Weighted total with the class-appropriate row per sample.
    let weight_vec = |tape: &mut Tape<S>, idx: usize| -> Var {
        let data: Vec<f64> = target
            .class_labels
            .iter()
            .map(|&c| weights.row(c)[idx])
            .collect();
        tape.constant(Tensor::from_f64(vec![b], &data))
    };
    let terms = [types, cart, frac, lattice_lengths, lattice_angles];
    let mut weighted: Option<Var> = None;
    for (idx, &term) in terms.iter().enumerate() {
        let w = weight_vec(tape, idx);
        let contrib = tape.mul(term, w);
        weighted = Some(match weighted {
            Some(acc) => tape.add(acc, contrib),
            None => contrib,
        });
    }
    let summed = tape.sum_all(weighted.unwrap());
    let total = tape.scale(summed, 1.0 / b as f64);

    LossBreakdown {
        types,
        cart,
        frac,
        lattice_lengths,
        lattice_angles,
        total,
    }
}

fn masked_sq_per_sample<S: Real>(
    tape: &mut Tape<S>,
    pred: Var,
    truth: Var,
    mask3: Var,
    inv3n: Var,
) -> Var {
    let d = tape.sub(pred, truth);
    let sq = tape.mul(d, d);
    let masked = tape.mul(sq, mask3);
    let per_dim = tape.sum_mid(masked); // [B, 3]
    let per_sample = tape.sum_last(per_dim); // [B]
    let flat_inv = tape.reshape(inv3n, vec![tape.shape(per_sample)[0]]);
    tape.mul(per_sample, flat_inv)
}

/// Mean over real atoms and channels of KL(N(mu, sigma) || N(0,1)),
/// per sample, then averaged over the batch.
pub fn kl_penalty<S: Real>(
    tape: &mut Tape<S>,
    target: &BatchTensors<S>,
    mu: Var,
    log_sigma: Var,
    latent_dim: usize,
) -> Var {
    let b = target.b;
    let two_s = tape.scale(log_sigma, 2.0);
    let var = tape.exp(two_s);
    let mu2 = tape.mul(mu, mu);
    let sum = tape.add(var, mu2);
    let sum = tape.affine(sum, 1.0, -1.0);
    let sum = tape.sub(sum, two_s);
    let kl = tape.scale(sum, 0.5);
    let maskd = tape.constant(target.mask_expanded(latent_dim));
    let masked = tape.mul(kl, maskd);
    let per_dim = tape.sum_mid(masked);
    let per_sample = tape.sum_last(per_dim);
    let inv = tape.constant(Tensor::from_f64(
        vec![b],
        &target
            .n_atoms
            .iter()
            .map(|&na| 1.0 / (na * latent_dim) as f64)
            .collect::<Vec<_>>(),
    ));
    let per_sample = tape.mul(per_sample, inv);
    let total = tape.sum_all(per_sample);
    tape.scale(total, 1.0 / b as f64)
}

/// Denoising corruption: with probability `p` per real atom, replace its type
/// with MASK and jitter its Cartesian position by N(0, sigma^2) per axis.
/// Crystal fractional coordinates are recomputed from the perturbed Cartesian
/// position and wrapped, keeping the sigma scale physical in both domains.
/// Targets stay the clean batch; only the returned copy is corrupted.
pub fn denoising_corrupt<R: Rng>(
    batch: &Batch,
    p: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<Batch, ModelError> {
    let mut out = batch.clone();
    for bi in 0..batch.batch_size {
        let periodic = batch.class_labels[bi] == ClassLabel::Crystal;
        for i in 0..batch.n_atoms[bi] {
            let flat = bi * batch.n_max + i;
            if rng.random::<f64>() >= p {
                continue;
            }
            out.atom_types[flat] = MASK_INDEX;
            let mut cart = [0.0f64; 3];
            for k in 0..3 {
                cart[k] = out.cart[flat * 3 + k] + sigma * gaussian(rng);
                out.cart[flat * 3 + k] = cart[k];
            }
            if periodic {
                let frac = wrap_fractional(&cart_to_frac(&batch.lattice[bi], &[cart])?);
                for k in 0..3 {
                    out.frac[flat * 3 + k] = frac[0][k];
                }
            }
        }
    }
    Ok(out)
}

/// One JSONL line per logged step.
#[derive(Debug, Serialize)]
pub struct TrainLogEntry {
    pub step: u64,
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_types: f64,
    pub loss_cart: f64,
    pub loss_frac: f64,
    pub loss_lattice_lengths: f64,
    pub loss_lattice_angles: f64,
    pub loss_kl: f64,
    pub lr: f64,
}

pub struct VaeTrainOutcome {
    pub model: VaeModel<f32>,
    pub steps: u64,
    pub final_loss: f64,
    pub log: Vec<TrainLogEntry>,
}

/// Stage-1 training loop: augment -> corrupt -> encode -> decode ->
/// weighted reconstruction + KL -> AdamW. Deterministic under a fixed seed;
/// every epoch derives its own randomness stream so resumed runs replay the
/// exact schedule.
pub fn train_vae(
    config: &RunConfig,
    records: &[DatasetRecord],
    out_dir: Option<&Path>,
    resume: Option<CheckpointData<f32>>,
) -> Result<VaeTrainOutcome, ModelError> {
    let vcfg = VaeConfig::from_run_config(config);
    let weights = LossWeights {
        periodic: config.loss.periodic,
        non_periodic: config.loss.non_periodic,
    };
    let seed = config.seed;

    let (mut model, mut opt, start_epoch, mut step) = match resume {
        Some(mut ckpt) => {
            let params = ckpt
                .take_set("params")
                .ok_or_else(|| ModelError::CheckpointMismatch {
                    reason: "missing params set".to_string(),
                })?;
            let model = VaeModel::from_store(vcfg, params)?;
            let mut opt = AdamW::new(config.train.lr);
            if let (Some(m), Some(v)) = (ckpt.take_set("adam_m"), ckpt.take_set("adam_v")) {
                let m: Vec<Vec<f32>> = m.tensors().iter().map(|t| t.data.clone()).collect();
                let v: Vec<Vec<f32>> = v.tensors().iter().map(|t| t.data.clone()).collect();
                opt.restore(ckpt.step, m, v);
            }
            let epoch: usize = ckpt
                .notes
                .get("epochs_completed")
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            (model, opt, epoch, ckpt.step)
        }
        None => (
            VaeModel::<f32>::init(vcfg, seed),
            AdamW::new(config.train.lr),
            0,
            0,
        ),
    };

    let mut log = Vec::new();
    let mut last_loss = f64::NAN;
    // Fresh runs truncate the log so reruns are byte-identical; resumed runs
    // append to the surviving log.
    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("train_log.jsonl");
            let file = if start_epoch == 0 {
                std::fs::File::create(&path)?
            } else {
                std::fs::File::options().create(true).append(true).open(&path)?
            };
            Some(file)
        }
        None => None,
    };

    for epoch in start_epoch..config.train.epochs {
        let mut rng = stream(seed, "vae-epoch", epoch as u64);
        let augmented: Vec<DatasetRecord> = records
            .iter()
            .map(|r| DatasetRecord {
                id: r.id.clone(),
                system: augment(&r.system, &mut rng),
                class_label: r.class_label,
            })
            .collect();
        let batches = make_batches(
            &augmented,
            config.train.batch_size,
            config.dataset.n_max,
            &mut rng,
        )?;
        for clean in &batches {
            let corrupted = denoising_corrupt(
                clean,
                config.train.corrupt_prob,
                config.train.corrupt_sigma,
                &mut rng,
            )?;
            let target = BatchTensors::<f32>::from_batch(clean);
            let input = BatchTensors::<f32>::from_batch(&corrupted);

            let mut tape = Tape::new();
            let params = model.store.load(&mut tape);
            let enc = encode(
                &mut tape,
                &params,
                &model,
                &input,
                LatentNoise::Sample(&mut rng),
            );
            let dec = decode(
                &mut tape,
                &params,
                &model,
                enc.z,
                &target.pad_mask,
                &target.n_atoms,
            );
            let rec = reconstruction_loss(&mut tape, &target, &dec, &weights);
            let kl = kl_penalty(
                &mut tape,
                &target,
                enc.mu,
                enc.log_sigma,
                model.cfg.latent_dim,
            );
            let kl_scaled = tape.scale(kl, config.loss.lambda_kl);
            let total = tape.add(rec.total, kl_scaled);

            let loss_val = tape.value(total).data[0].as_f64();
            if !loss_val.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    step,
                    diagnostics: format!(
                        "types {:?} cart {:?} frac {:?}",
                        tape.value(rec.types).data,
                        tape.value(rec.cart).data,
                        tape.value(rec.frac).data
                    ),
                });
            }
            tape.backward(total)?;
            let grads = params.grads(&tape);
            opt.step(&mut model.store, &grads)?;
            step += 1;
            last_loss = loss_val;

            if step % config.train.log_every as u64 == 0 {
                let mean = |v: Var| -> f64 {
                    let d = tape.value(v).to_f64_vec();
                    d.iter().sum::<f64>() / d.len() as f64
                };
                let entry = TrainLogEntry {
                    step,
                    epoch,
                    loss_total: loss_val,
                    loss_types: mean(rec.types),
                    loss_cart: mean(rec.cart),
                    loss_frac: mean(rec.frac),
                    loss_lattice_lengths: mean(rec.lattice_lengths),
                    loss_lattice_angles: mean(rec.lattice_angles),
                    loss_kl: tape.value(kl).data[0].as_f64(),
                    lr: config.train.lr,
                };
                if let Some(f) = log_file.as_mut() {
                    writeln!(f, "{}", serde_json::to_string(&entry).unwrap())?;
                }
                log.push(entry);
            }
        }

        let epochs_done = epoch + 1;
        let at_interval = config.train.checkpoint_every > 0
            && epochs_done % config.train.checkpoint_every == 0;
        if let Some(dir) = out_dir {
            if at_interval || epochs_done == config.train.epochs {
                save_vae_checkpoint(dir, &model, &opt, config, step, epochs_done)?;
            }
        }
    }

    Ok(VaeTrainOutcome {
        model,
        steps: step,
        final_loss: last_loss,
        log,
    })
}

pub fn save_vae_checkpoint(
    dir: &Path,
    model: &VaeModel<f32>,
    opt: &AdamW<f32>,
    config: &RunConfig,
    step: u64,
    epochs_completed: usize,
) -> Result<(), ModelError> {
    let (m, v) = opt.moments();
    let mut sets = vec![("params".to_string(), model.store.clone())];
    if !m.is_empty() {
        sets.push(("adam_m".to_string(), moments_store(&model.store, m)));
        sets.push(("adam_v".to_string(), moments_store(&model.store, v)));
    }
    let mut notes = BTreeMap::new();
    notes.insert("stage".to_string(), "vae".to_string());
    notes.insert("epochs_completed".to_string(), epochs_completed.to_string());
    notes.insert(
        "block_activation".to_string(),
        "gelu, ff_mult 4".to_string(),
    );
    let data = CheckpointData {
        sets,
        config: serde_json::to_value(config).unwrap(),
        seed: config.seed,
        step,
        notes,
    };
    atomgen_nn::save_checkpoint(dir, &data)?;
    Ok(())
}

pub(crate) fn moments_store(reference: &ParamStore<f32>, m: &[Vec<f32>]) -> ParamStore<f32> {
    let mut out = ParamStore::new();
    for (i, (name, tensor)) in reference.iter().enumerate() {
        out.add(name, Tensor::new(tensor.shape.clone(), m[i].clone()));
    }
    out
}

/// Deterministic-mode reconstruction of each record through encode/decode.
/// Used by reconstruction metrics and the latent export.
pub struct Reconstruction {
    pub record: DatasetRecord,
    pub atom_types: Vec<usize>,
    pub cart: Vec<[f64; 3]>,
    pub frac: Vec<[f64; 3]>,
    pub lengths: [f64; 3],
    pub angles_deg: [f64; 3],
}

pub fn reconstruct_records<S: Real>(
    model: &VaeModel<S>,
    records: &[DatasetRecord],
    n_max: usize,
) -> Result<Vec<Reconstruction>, ModelError> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(16) {
        let refs: Vec<&DatasetRecord> = chunk.iter().collect();
        let batch = Batch::from_records(&refs, n_max)?;
        let bt = BatchTensors::<S>::from_batch(&batch);
        let mut tape = Tape::new();
        let params = model.store.load(&mut tape);
        let enc = encode(&mut tape, &params, model, &bt, LatentNoise::Deterministic);
        let dec = decode(&mut tape, &params, model, enc.z, &bt.pad_mask, &bt.n_atoms);
        let logits = tape.value(dec.atom_logits).to_f64_vec();
        let cart = tape.value(dec.cart_pred).to_f64_vec();
        let frac = tape.value(dec.frac_pred).to_f64_vec();
        let lens = tape.value(dec.lengths_pred).to_f64_vec();
        let angs = tape.value(dec.angles_pred).to_f64_vec();
        for (bi, record) in chunk.iter().enumerate() {
            let n = record.system.n_atoms();
            let mut types = Vec::with_capacity(n);
            let mut carts = Vec::with_capacity(n);
            let mut fracs = Vec::with_capacity(n);
            for i in 0..n {
                let flat = bi * batch.n_max + i;
                types.push(argmax_element(
                    &logits[flat * VOCAB_SIZE..(flat + 1) * VOCAB_SIZE],
                ));
                carts.push([cart[flat * 3], cart[flat * 3 + 1], cart[flat * 3 + 2]]);
                fracs.push([frac[flat * 3], frac[flat * 3 + 1], frac[flat * 3 + 2]]);
            }
            out.push(Reconstruction {
                record: (*record).clone(),
                atom_types: types,
                cart: carts,
                frac: fracs,
                lengths: [lens[bi * 3], lens[bi * 3 + 1], lens[bi * 3 + 2]],
                angles_deg: [
                    angs[bi * 3].to_degrees(),
                    angs[bi * 3 + 1].to_degrees(),
                    angs[bi * 3 + 2].to_degrees(),
                ],
            });
        }
    }
    Ok(out)
}

/// Argmax over the element rows of the type head (reserved padding and MASK
/// classes never decode); ties break toward the lowest index.
pub fn argmax_element(logits: &[f64]) -> usize {
    let mut best = 1;
    let mut best_v = logits[1];
    for (idx, &v) in logits.iter().enumerate().take(101).skip(2) {
        if v > best_v {
            best_v = v;
            best = idx;
        }
    }
    best
}

/// One latent export row: (record id, atom index, element, class, channels).
pub type LatentRow = (String, usize, usize, ClassLabel, Vec<f64>);

/// Deterministic-mode latent rows (one per real atom) for export.
pub fn export_latents<S: Real>(
    model: &VaeModel<S>,
    records: &[DatasetRecord],
    n_max: usize,
) -> Result<Vec<LatentRow>, ModelError> {
    let mut rows = Vec::new();
    for chunk in records.chunks(16) {
        let refs: Vec<&DatasetRecord> = chunk.iter().collect();
        let batch = Batch::from_records(&refs, n_max)?;
        let bt = BatchTensors::<S>::from_batch(&batch);
        let mut tape = Tape::new();
        let params = model.store.load(&mut tape);
        let enc = encode(&mut tape, &params, model, &bt, LatentNoise::Deterministic);
        let z = tape.value(enc.z).to_f64_vec();
        let d = model.cfg.latent_dim;
        for (bi, record) in chunk.iter().enumerate() {
            for i in 0..record.system.n_atoms() {
                let flat = bi * batch.n_max + i;
                rows.push((
                    record.id.clone(),
                    i,
                    record.system.atom_types[i],
                    record.class_label,
                    z[flat * d..(flat + 1) * d].to_vec(),
                ));
            }
        }
    }
    Ok(rows)
}
