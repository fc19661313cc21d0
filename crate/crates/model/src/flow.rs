use crate::batch_tensors::BatchTensors;
use crate::dit::{denoise, denoise_frozen, DenoiserInput, DitConfig, DitModel, CLASS_NULL};
use crate::rng::{gaussian, stream};
use crate::vae::{encode, moments_store, LatentNoise, VaeModel};
use crate::ModelError;
use atomgen_data::{make_batches, DatasetRecord, RunConfig};
use atomgen_geom::augment;
use atomgen_nn::{AdamW, CheckpointData, Ema, Real, Tape, Tensor, Var};
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

/// Draw a flow-matching time uniformly from [t_min, 1).
pub fn sample_time<R: Rng>(rng: &mut R, t_min: f64) -> f64 {
    t_min + (1.0 - t_min) * rng.random::<f64>()
}

/// One flow-matching training batch: clean latents z1 from the frozen
/// encoder, zero-centered Gaussian base draw z0, per-sample times, and the
/// linear interpolant z_t = (1 - t) z0 + t z1.
pub struct DiffusionBatch<S: Real> {
    pub z1: Tensor<S>,
    pub z0: Tensor<S>,
    pub t: Vec<f64>,
    pub zt: Tensor<S>,
}

impl<S: Real> DiffusionBatch<S> {
    pub fn build(z1: Tensor<S>, z0: Tensor<S>, t: Vec<f64>) -> Self {
        debug_assert_eq!(z1.shape, z0.shape);
        debug_assert_eq!(t.len(), z1.shape[0]);
        let zt = interpolate(&z0, &z1, &t);
        DiffusionBatch { z1, z0, t, zt }
    }

    /// Per-channel mean of z0 over real atoms, per sample; the base draw is
    /// centered, so every entry is ~0 (the documented 1e-6 bound).
    pub fn base_channel_means(&self, pad_mask: &[bool], n_atoms: &[usize]) -> Vec<f64> {
        let (b, n, d) = (self.z0.shape[0], self.z0.shape[1], self.z0.shape[2]);
        let mut means = Vec::with_capacity(b * d);
        for bi in 0..b {
            for k in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    if pad_mask[bi * n + i] {
                        acc += self.z0.data[(bi * n + i) * d + k].as_f64();
                    }
                }
                means.push(acc / n_atoms[bi] as f64);
            }
        }
        means
    }
}

/// Linear interpolant z_t = (1 - t) z_0 + t z_1, with per-sample times.
pub fn interpolate<S: Real>(z0: &Tensor<S>, z1: &Tensor<S>, t: &[f64]) -> Tensor<S> {
    assert_eq!(z0.shape, z1.shape, "interpolate shape mismatch");
    let (b, rest) = (z0.shape[0], z0.numel() / z0.shape[0]);
    assert_eq!(t.len(), b);
    let mut data = Vec::with_capacity(z0.numel());
    for bi in 0..b {
        let tb = S::from_f64(t[bi]);
        let omt = S::from_f64(1.0 - t[bi]);
        for k in 0..rest {
            let idx = bi * rest + k;
            data.push(omt * z0.data[idx] + tb * z1.data[idx]);
        }
    }
    Tensor::new(z0.shape.clone(), data)
}

/// Conditional vector field u = (z1 - zt) / (1 - t). For an exact interpolant
/// this is identically z1 - z0 at every t < 1.
pub fn target_vector_field<S: Real>(
    zt: &Tensor<S>,
    z1: &Tensor<S>,
    t: f64,
) -> Result<Tensor<S>, ModelError> {
    if t >= 1.0 {
        return Err(ModelError::BadSamplingSpec {
            reason: format!("vector field undefined at t = {t} >= 1"),
        });
    }
    let inv = S::from_f64(1.0 / (1.0 - t));
    Ok(Tensor::new(
        zt.shape.clone(),
        z1.data
            .iter()
            .zip(&zt.data)
            .map(|(&a, &b)| (a - b) * inv)
            .collect(),
    ))
}

/// Flow-matching loss on the tape: per sample,
/// (1 / (1 - t_c)^2) * (1 / N) * sum over real atoms of |z1 - z1_pred|^2
/// with t_c = min(t, t_clip), averaged over the batch.
pub fn fm_loss<S: Real>(
    tape: &mut Tape<S>,
    z1_pred: Var,
    z1_true: &Tensor<S>,
    t: &[f64],
    t_clip: f64,
    pad_mask: &[bool],
    n_atoms: &[usize],
) -> Var {
    let shape = tape.shape(z1_pred).to_vec();
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    assert_eq!(t.len(), b);
    let truth = tape.constant(z1_true.clone());
    let diff = tape.sub(z1_pred, truth);
    let sq = tape.mul(diff, diff);
    let mut mask = vec![S::zero(); b * n * d];
    for (row, &real) in pad_mask.iter().enumerate() {
        if real {
            for v in mask[row * d..(row + 1) * d].iter_mut() {
                *v = S::one();
            }
        }
    }
    let mask = tape.constant(Tensor::new(vec![b, n, d], mask));
    let masked = tape.mul(sq, mask);
    let per_dim = tape.sum_mid(masked);
    let per_sample = tape.sum_last(per_dim); // [B]
    let coeff: Vec<f64> = t
        .iter()
        .zip(n_atoms)
        .map(|(&tb, &na)| {
            let tc = tb.min(t_clip);
            1.0 / ((1.0 - tc) * (1.0 - tc)) / na as f64
        })
        .collect();
    let coeff = tape.constant(Tensor::from_f64(vec![b], &coeff));
    let weighted = tape.mul(per_sample, coeff);
    let total = tape.sum_all(weighted);
    tape.scale(total, 1.0 / b as f64)
}

/// Per-sample per-channel zero-centering over real atoms (padding stays 0).
pub fn zero_center_latents<S: Real>(z: &mut Tensor<S>, pad_mask: &[bool], n_atoms: &[usize]) {
    let (b, n, d) = (z.shape[0], z.shape[1], z.shape[2]);
    for bi in 0..b {
        for k in 0..d {
            let mut mean = S::zero();
            for i in 0..n {
                if pad_mask[bi * n + i] {
                    mean = mean + z.data[(bi * n + i) * d + k];
                }
            }
            mean = mean / S::from_f64(n_atoms[bi] as f64);
            for i in 0..n {
                if pad_mask[bi * n + i] {
                    z.data[(bi * n + i) * d + k] = z.data[(bi * n + i) * d + k] - mean;
                }
            }
        }
    }
}

/// Gaussian base draw, zero-centered per channel over real atoms.
pub fn sample_base_latents<S: Real, R: Rng>(
    b: usize,
    n: usize,
    d: usize,
    pad_mask: &[bool],
    n_atoms: &[usize],
    rng: &mut R,
) -> Tensor<S> {
    let mut z = Tensor::zeros(vec![b, n, d]);
    for (row, &real) in pad_mask.iter().enumerate() {
        if real {
            for k in 0..d {
                z.data[row * d + k] = S::from_f64(gaussian(rng));
            }
        }
    }
    zero_center_latents(&mut z, pad_mask, n_atoms);
    z
}

#[derive(Debug, Serialize)]
pub struct DitTrainLogEntry {
    pub step: u64,
    pub epoch: usize,
    pub loss_fm: f64,
    pub lr: f64,
}

pub struct DitTrainOutcome {
    pub model: DitModel<f32>,
    pub ema: Ema<f32>,
    pub steps: u64,
    pub log: Vec<DitTrainLogEntry>,
}

/// Stage-2 training: augment -> encode with the frozen VAE (stochastic
/// posterior draw) -> linear interpolant -> optional self-conditioning
/// preliminary pass -> label dropout -> flow-matching loss -> AdamW + EMA.
/// The VAE parameter set is read-only throughout.
pub fn train_dit(
    config: &RunConfig,
    vae: &VaeModel<f32>,
    records: &[DatasetRecord],
    out_dir: Option<&Path>,
    resume: Option<CheckpointData<f32>>,
) -> Result<DitTrainOutcome, ModelError> {
    let dcfg = DitConfig::from_run_config(config)?;
    if dcfg.latent_dim != vae.cfg.latent_dim {
        return Err(ModelError::CheckpointMismatch {
            reason: format!(
                "latent width disagreement: VAE {} vs denoiser {}",
                vae.cfg.latent_dim, dcfg.latent_dim
            ),
        });
    }
    let seed = config.seed;

    let (mut model, mut ema, mut opt, start_epoch, mut step) = match resume {
        Some(mut ckpt) => {
            let params = ckpt
                .take_set("params")
                .ok_or_else(|| ModelError::CheckpointMismatch {
                    reason: "missing params set".to_string(),
                })?;
            let model = DitModel::from_store(dcfg, params)?;
            let ema_store = ckpt
                .take_set("ema")
                .ok_or_else(|| ModelError::CheckpointMismatch {
                    reason: "missing ema set".to_string(),
                })?;
            let ema = Ema::from_shadow(ema_store, config.train.ema_decay);
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
            (model, ema, opt, epoch, ckpt.step)
        }
        None => {
            let model = DitModel::<f32>::init(dcfg, seed);
            let ema = Ema::new(&model.store, config.train.ema_decay);
            (model, ema, AdamW::new(config.train.lr), 0, 0)
        }
    };

    let mut log = Vec::new();
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
        let mut rng = stream(seed, "dit-epoch", epoch as u64);
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
        for batch in &batches {
            let bt = BatchTensors::<f32>::from_batch(batch);
            let (b, n, d) = (bt.b, bt.n, vae.cfg.latent_dim);

            // Clean latents from the frozen VAE, resampled stochastically.
            let z1 = {
                let mut tape = Tape::new();
                let params = crate::dit::frozen_params(&mut tape, &vae.store);
                let enc = encode(&mut tape, &params, vae, &bt, LatentNoise::Sample(&mut rng));
                let mut z = tape.value(enc.z).clone();
                // Zero out padded rows for hygiene; they never enter the loss.
                for (row, &real) in bt.pad_mask.iter().enumerate() {
                    if !real {
                        for v in z.data[row * d..(row + 1) * d].iter_mut() {
                            *v = 0.0;
                        }
                    }
                }
                z
            };

            let z0 = sample_base_latents::<f32, _>(b, n, d, &bt.pad_mask, &bt.n_atoms, &mut rng);
            let t: Vec<f64> = (0..b)
                .map(|_| sample_time(&mut rng, config.train.t_min))
                .collect();
            let diffusion = DiffusionBatch::build(z1, z0, t);
            let (z1, zt, t) = (&diffusion.z1, &diffusion.zt, &diffusion.t);

            // Self-conditioning: preliminary no-gradient prediction for the
            // selected samples, zeros elsewhere.
            let class_ids: Vec<usize> = bt.class_labels.iter().map(|c| c.index()).collect();
            let self_cond_on: Vec<bool> = (0..b)
                .map(|_| rng.random::<f64>() < config.train.self_cond_prob)
                .collect();
            let zeros = Tensor::zeros(vec![b, n, d]);
            let self_cond = if self_cond_on.iter().any(|&x| x) {
                let prelim = denoise_frozen(
                    &model,
                    &DenoiserInput {
                        zt,
                        t,
                        class_ids: &class_ids,
                        self_cond: &zeros,
                        pad_mask: &bt.pad_mask,
                    },
                );
                let mut sc = zeros.clone();
                for bi in 0..b {
                    if self_cond_on[bi] {
                        let span = bi * n * d..(bi + 1) * n * d;
                        sc.data[span.clone()].copy_from_slice(&prelim.data[span]);
                    }
                }
                sc
            } else {
                zeros
            };

            // Class label dropout to the learned null embedding.
            let dropped_ids: Vec<usize> = class_ids
                .iter()
                .map(|&c| {
                    if rng.random::<f64>() < config.train.label_dropout {
                        CLASS_NULL
                    } else {
                        c
                    }
                })
                .collect();

            let mut tape = Tape::new();
            let params = model.store.load(&mut tape);
            let pred = denoise(
                &mut tape,
                &params,
                &model,
                &DenoiserInput {
                    zt,
                    t,
                    class_ids: &dropped_ids,
                    self_cond: &self_cond,
                    pad_mask: &bt.pad_mask,
                },
            );
            let loss = fm_loss(
                &mut tape,
                pred,
                z1,
                t,
                config.train.t_clip,
                &bt.pad_mask,
                &bt.n_atoms,
            );
            let loss_val = tape.value(loss).data[0].as_f64();
            if !loss_val.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    step,
                    diagnostics: format!("fm loss {loss_val} (t = {t:?})"),
                });
            }
            tape.backward(loss)?;
            let grads = params.grads(&tape);
            opt.step(&mut model.store, &grads)?;
            ema.update(&model.store);
            step += 1;

            if step % config.train.log_every as u64 == 0 {
                let entry = DitTrainLogEntry {
                    step,
                    epoch,
                    loss_fm: loss_val,
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
                save_dit_checkpoint(dir, &model, &ema, &opt, config, step, epochs_done)?;
            }
        }
    }

    Ok(DitTrainOutcome {
        model,
        ema,
        steps: step,
        log,
    })
}

pub fn save_dit_checkpoint(
    dir: &Path,
    model: &DitModel<f32>,
    ema: &Ema<f32>,
    opt: &AdamW<f32>,
    config: &RunConfig,
    step: u64,
    epochs_completed: usize,
) -> Result<(), ModelError> {
    let (m, v) = opt.moments();
    let mut sets = vec![
        ("params".to_string(), model.store.clone()),
        ("ema".to_string(), ema.shadow().clone()),
    ];
    if !m.is_empty() {
        sets.push(("adam_m".to_string(), moments_store(&model.store, m)));
        sets.push(("adam_v".to_string(), moments_store(&model.store, v)));
    }
    let mut notes = BTreeMap::new();
    notes.insert("stage".to_string(), "dit".to_string());
    notes.insert("epochs_completed".to_string(), epochs_completed.to_string());
    notes.insert(
        "block_activation".to_string(),
        "gelu, ff_mult 4".to_string(),
    );
    notes.insert(
        "self_conditioning_inference".to_string(),
        "combined (cfg) prediction from the previous step".to_string(),
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

