use crate::dit::{denoise_frozen, DenoiserInput, DitModel, CLASS_NULL};
use crate::flow::sample_base_latents;
use crate::rng::stream;
use crate::vae::{argmax_element, decode, VaeModel};
use crate::ModelError;
use atomgen_data::{AtomCountHistogram, ClassLabel, DatasetRecord};
use atomgen_geom::{
    lattice_params_to_matrix, wrap_fractional, AtomicSystem, LatticeParams, Vec3, VOCAB_SIZE,
};
use atomgen_nn::{Real, Tape, Tensor};

/// Where the per-system atom count comes from at sampling time.
#[derive(Debug, Clone)]
pub enum AtomCountSource {
    Explicit(usize),
    Histogram(AtomCountHistogram),
}

#[derive(Debug, Clone)]
pub struct SamplingSpec {
    pub class: ClassLabel,
    pub count: usize,
    pub steps: usize,
    pub guidance_scale: f64,
    pub atom_counts: AtomCountSource,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.steps == 0 {
            return Err(ModelError::BadSamplingSpec {
                reason: "integration steps T must be >= 1".to_string(),
            });
        }
        if self.guidance_scale < 0.0 {
            return Err(ModelError::BadSamplingSpec {
                reason: "guidance scale must be >= 0".to_string(),
            });
        }
        if self.count == 0 {
            return Err(ModelError::BadSamplingSpec {
                reason: "sample count must be >= 1".to_string(),
            });
        }
        Ok(())
    }
}

/// Classifier-free guidance combination: (1 - gamma) uncond + gamma cond.
/// Exact at gamma = 0 and gamma = 1.
pub fn cfg_combine<S: Real>(z_cond: &Tensor<S>, z_uncond: &Tensor<S>, gamma: f64) -> Tensor<S> {
    assert_eq!(z_cond.shape, z_uncond.shape, "cfg shape mismatch");
    let g = S::from_f64(gamma);
    let omg = S::from_f64(1.0 - gamma);
    Tensor::new(
        z_cond.shape.clone(),
        z_cond
            .data
            .iter()
            .zip(&z_uncond.data)
            .map(|(&c, &u)| omg * u + g * c)
            .collect(),
    )
}

/// One Euler step z_{t+dt} = z_t + dt (z1_pred - z_t) / (1 - t).
///
/// When the step lands on t = 1 (i.e. 1 - t == dt up to round-off) the
/// coefficient is algebraically 1, so the prediction is returned directly;
/// that keeps the final step exact instead of one rounding away from it.
pub fn euler_step<S: Real>(
    zt: &Tensor<S>,
    z1_pred: &Tensor<S>,
    t: f64,
    dt: f64,
) -> Result<Tensor<S>, ModelError> {
    assert_eq!(zt.shape, z1_pred.shape, "euler shape mismatch");
    let remaining = 1.0 - t;
    if remaining < 1e-9 {
        return Err(ModelError::BadSamplingSpec {
            reason: format!("euler step at t = {t}: 1 - t below the 1e-9 guard"),
        });
    }
    if remaining <= dt * (1.0 + 1e-12) {
        return Ok(z1_pred.clone());
    }
    let coeff = S::from_f64(dt / remaining);
    Ok(Tensor::new(
        zt.shape.clone(),
        zt.data
            .iter()
            .zip(&z1_pred.data)
            .map(|(&z, &p)| z + coeff * (p - z))
            .collect(),
    ))
}

/// Result of decoding one sampled latent set.
#[derive(Debug, Clone)]
pub enum SampleOutcome {
    System(AtomicSystem),
    DecodeFailure(String),
}

/// Full inference path: draw sizes, integrate the guided field from noise,
/// decode with the VAE, and split-decode by target class. Molecules keep
/// (types, Cartesian coords); crystals keep (types, wrapped fractional
/// coords, lattice from the predicted parameters). Invalid geometry yields a
/// per-sample decode failure rather than an invalid system.
pub fn sample<S: Real>(
    dit: &DitModel<S>,
    vae: &VaeModel<S>,
    spec: &SamplingSpec,
) -> Result<Vec<SampleOutcome>, ModelError> {
    spec.validate()?;
    if dit.cfg.latent_dim != vae.cfg.latent_dim {
        return Err(ModelError::CheckpointMismatch {
            reason: format!(
                "latent width disagreement: denoiser {} vs VAE {}",
                dit.cfg.latent_dim, vae.cfg.latent_dim
            ),
        });
    }
    let mut rng = stream(spec.seed, "sample", 0);
    let b = spec.count;
    let d = dit.cfg.latent_dim;

    let n_atoms: Vec<usize> = (0..b)
        .map(|_| match &spec.atom_counts {
            AtomCountSource::Explicit(n) => *n,
            AtomCountSource::Histogram(h) => h.sample(&mut rng),
        })
        .collect();
    if n_atoms.contains(&0) {
        return Err(ModelError::BadSamplingSpec {
            reason: "drew a zero atom count".to_string(),
        });
    }
    let n_max = *n_atoms.iter().max().unwrap();
    let mut pad_mask = vec![false; b * n_max];
    for (bi, &n) in n_atoms.iter().enumerate() {
        for i in 0..n {
            pad_mask[bi * n_max + i] = true;
        }
    }

    let mut zt = sample_base_latents::<S, _>(b, n_max, d, &pad_mask, &n_atoms, &mut rng);
    let mut self_cond = Tensor::<S>::zeros(vec![b, n_max, d]);
    let cond_ids = vec![spec.class.index(); b];
    let null_ids = vec![CLASS_NULL; b];
    let dt = 1.0 / spec.steps as f64;

    for k in 0..spec.steps {
        let t = k as f64 / spec.steps as f64;
        let times = vec![t; b];
        let z_cond = denoise_frozen(
            dit,
            &DenoiserInput {
                zt: &zt,
                t: &times,
                class_ids: &cond_ids,
                self_cond: &self_cond,
                pad_mask: &pad_mask,
            },
        );
        let z_uncond = denoise_frozen(
            dit,
            &DenoiserInput {
                zt: &zt,
                t: &times,
                class_ids: &null_ids,
                self_cond: &self_cond,
                pad_mask: &pad_mask,
            },
        );
        let combined = cfg_combine(&z_cond, &z_uncond, spec.guidance_scale);
        if !combined.is_finite() {
            return Err(ModelError::NonFiniteLatents { step: k });
        }
        zt = euler_step(&zt, &combined, t, dt)?;
        self_cond = combined;
    }
    if !zt.is_finite() {
        return Err(ModelError::NonFiniteLatents { step: spec.steps });
    }

    // Decode z^(1) with the VAE decoder and split by requested class.
    let mut tape = Tape::new();
    let params = crate::dit::frozen_params(&mut tape, &vae.store);
    let z = tape.constant(zt);
    let dec = decode(&mut tape, &params, vae, z, &pad_mask, &n_atoms);
    let logits = tape.value(dec.atom_logits).to_f64_vec();
    let cart = tape.value(dec.cart_pred).to_f64_vec();
    let frac = tape.value(dec.frac_pred).to_f64_vec();
    let lens = tape.value(dec.lengths_pred).to_f64_vec();
    let angs = tape.value(dec.angles_pred).to_f64_vec();

    let mut outcomes = Vec::with_capacity(b);
    for bi in 0..b {
        let n = n_atoms[bi];
        let mut types = Vec::with_capacity(n);
        let mut carts: Vec<Vec3> = Vec::with_capacity(n);
        let mut fracs: Vec<Vec3> = Vec::with_capacity(n);
        for i in 0..n {
            let flat = bi * n_max + i;
            types.push(argmax_element(
                &logits[flat * VOCAB_SIZE..(flat + 1) * VOCAB_SIZE],
            ));
            carts.push([cart[flat * 3], cart[flat * 3 + 1], cart[flat * 3 + 2]]);
            fracs.push([frac[flat * 3], frac[flat * 3 + 1], frac[flat * 3 + 2]]);
        }
        let outcome = match spec.class {
            ClassLabel::Molecule => AtomicSystem::molecule(types, carts)
                .map_err(|e| e.to_string()),
            ClassLabel::Crystal => {
                let params = LatticeParams::new(
                    [lens[bi * 3], lens[bi * 3 + 1], lens[bi * 3 + 2]],
                    [
                        angs[bi * 3].to_degrees(),
                        angs[bi * 3 + 1].to_degrees(),
                        angs[bi * 3 + 2].to_degrees(),
                    ],
                );
                lattice_params_to_matrix(&params)
                    .map_err(|e| e.to_string())
                    .and_then(|lattice| {
                        AtomicSystem::crystal(types, wrap_fractional(&fracs), lattice)
                            .map_err(|e| e.to_string())
                    })
            }
        };
        outcomes.push(match outcome {
            Ok(system) => SampleOutcome::System(system),
            Err(reason) => SampleOutcome::DecodeFailure(reason),
        });
    }
    Ok(outcomes)
}

/// Wrap sampled systems as dataset records (decode failures dropped),
/// ids formed as `{prefix}-{index:05}` over the full outcome list.
pub fn outcomes_to_records(outcomes: &[SampleOutcome], prefix: &str) -> Vec<DatasetRecord> {
    outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| match o {
            SampleOutcome::System(sys) => {
                Some(DatasetRecord::new(format!("{prefix}-{i:05}"), sys.clone()))
            }
            SampleOutcome::DecodeFailure(_) => None,
        })
        .collect()
}

