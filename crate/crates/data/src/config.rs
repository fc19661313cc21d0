use crate::DataError;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Denoiser size presets; dimensions follow the published table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DitPreset {
    S,
    B,
    L,
}

impl DitPreset {
    /// (d_model, n_heads, n_layers)
    pub fn dims(self) -> (usize, usize, usize) {
        match self {
            DitPreset::S => (384, 6, 12),
            DitPreset::B => (768, 12, 12),
            DitPreset::L => (1024, 24, 24),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub latent_dim: usize,
    pub ff_mult: usize,
}

impl Default for VaeSection {
    fn default() -> Self {
        VaeSection {
            d_model: 512,
            n_heads: 8,
            n_layers: 8,
            latent_dim: 8,
            ff_mult: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DitSection {
    /// When set, supplies the dimensions; explicit fields below override.
    pub preset: Option<DitPreset>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_layers: Option<usize>,
    pub ff_mult: usize,
}

impl Default for DitSection {
    fn default() -> Self {
        DitSection {
            preset: Some(DitPreset::S),
            d_model: None,
            n_heads: None,
            n_layers: None,
            ff_mult: 4,
        }
    }
}

impl DitSection {
    /// (d_model, n_heads, n_layers) after preset/override resolution.
    pub fn resolve(&self) -> Result<(usize, usize, usize), DataError> {
        let base = self.preset.map(DitPreset::dims);
        let pick = |explicit: Option<usize>, slot: usize| -> Option<usize> {
            explicit.or_else(|| base.map(|d| [d.0, d.1, d.2][slot]))
        };
        match (pick(self.d_model, 0), pick(self.n_heads, 1), pick(self.n_layers, 2)) {
            (Some(d), Some(h), Some(l)) => Ok((d, h, l)),
            _ => Err(DataError::Config {
                reason: "dit section needs a preset or explicit d_model/n_heads/n_layers"
                    .to_string(),
            }),
        }
    }
}

/// Reconstruction-loss weights per periodicity class, ordered
/// (lambda_A, lambda_X, lambda_F, lambda_Ll, lambda_La).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSection {
    pub periodic: [f64; 5],
    pub non_periodic: [f64; 5],
    pub lambda_kl: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            periodic: [1.0, 0.0, 10.0, 1.0, 10.0],
            non_periodic: [1.0, 10.0, 0.0, 0.0, 0.0],
            lambda_kl: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub ema_decay: f64,
    pub corrupt_prob: f64,
    pub corrupt_sigma: f64,
    pub label_dropout: f64,
    pub self_cond_prob: f64,
    pub t_min: f64,
    pub t_clip: f64,
    /// Checkpoint every this many epochs (the final epoch always writes one).
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr: 1e-4,
            batch_size: 256,
            epochs: 100,
            ema_decay: 0.9999,
            corrupt_prob: 0.1,
            corrupt_sigma: 0.1,
            label_dropout: 0.1,
            self_cond_prob: 0.5,
            t_min: 0.01,
            t_clip: 0.9,
            checkpoint_every: 0,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSection {
    pub steps: usize,
    pub gamma: f64,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            steps: 500,
            gamma: 1.0,
        }
    }
}

/// The single declarative configuration document for a run. Every CLI command
/// resolves one of these (file plus overrides) and persists it in its
/// manifest so results stay auditable.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub vae: VaeSection,
    pub dit: DitSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub train_jsonl: String,
    pub n_max: usize,
    /// Whether molecule importers keep explicit hydrogens.
    pub keep_hydrogens: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            train_jsonl: String::new(),
            n_max: 24,
            keep_hydrogens: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| DataError::Config {
            reason: format!("{}: {e}", path.display()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Apply a `key.path=value` override onto the serialized tree.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), DataError> {
        let (path, raw) = spec.split_once('=').ok_or_else(|| DataError::Config {
            reason: format!("override {spec:?} must look like section.key=value"),
        })?;
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        {
            let segments: Vec<&str> = path.split('.').collect();
            let mut node = &mut tree;
            for seg in &segments[..segments.len() - 1] {
                node = node
                    .as_object_mut()
                    .and_then(|obj| obj.get_mut(*seg))
                    .ok_or_else(|| DataError::Config {
                        reason: format!("unknown config key {seg:?} in override {spec:?}"),
                    })?;
            }
            let last = segments[segments.len() - 1];
            let obj = node.as_object_mut().ok_or_else(|| DataError::Config {
                reason: format!("override path {path:?} does not address a field"),
            })?;
            if !obj.contains_key(last) {
                return Err(DataError::Config {
                    reason: format!("unknown config key {last:?} in override {spec:?}"),
                });
            }
            let value: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            obj.insert(last.to_string(), value);
        }
        let updated: RunConfig = serde_json::from_value(tree).map_err(|e| DataError::Config {
            reason: format!("override {spec:?} produced an invalid config: {e}"),
        })?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let positive = [
            ("vae.d_model", self.vae.d_model),
            ("vae.n_heads", self.vae.n_heads),
            ("vae.n_layers", self.vae.n_layers),
            ("vae.latent_dim", self.vae.latent_dim),
            ("vae.ff_mult", self.vae.ff_mult),
            ("train.batch_size", self.train.batch_size),
            ("train.epochs", self.train.epochs),
            ("sample.steps", self.sample.steps),
            ("dataset.n_max", self.dataset.n_max),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(DataError::Config {
                    reason: format!("{name} must be positive"),
                });
            }
        }
        if self.vae.d_model % self.vae.n_heads != 0 {
            return Err(DataError::Config {
                reason: "vae.d_model must be divisible by vae.n_heads".to_string(),
            });
        }
        let (d, h, _) = self.dit.resolve()?;
        if d % h != 0 {
            return Err(DataError::Config {
                reason: "dit.d_model must be divisible by dit.n_heads".to_string(),
            });
        }
        if self.train.lr <= 0.0 || self.train.lr.is_nan() {
            return Err(DataError::Config {
                reason: "train.lr must be positive".to_string(),
            });
        }
        for (name, p) in [
            ("train.corrupt_prob", self.train.corrupt_prob),
            ("train.label_dropout", self.train.label_dropout),
            ("train.self_cond_prob", self.train.self_cond_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::Config {
                    reason: format!("{name} must lie in [0,1]"),
                });
            }
        }
        if !(0.0..1.0).contains(&self.train.t_min) {
            return Err(DataError::Config {
                reason: "train.t_min must lie in [0,1)".to_string(),
            });
        }
        if !(0.0..=1.0).contains(&self.train.ema_decay) {
            return Err(DataError::Config {
                reason: "train.ema_decay must lie in [0,1]".to_string(),
            });
        }
        if self.sample.gamma < 0.0 {
            return Err(DataError::Config {
                reason: "sample.gamma must be >= 0".to_string(),
            });
        }
        Ok(())
    }
}
