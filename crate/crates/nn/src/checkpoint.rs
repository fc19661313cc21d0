use crate::{NnError, ParamStore, Real, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

/// On-disk checkpoint layout: `manifest.json` plus one little-endian raw
/// float32 blob per tensor, named `<set>.<parameter path>.bin`. The primary
/// set is `params`; training adds `ema` and the `adam_m`/`adam_v` moments so
/// interrupted runs resume exactly.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub sets: Vec<SetManifest>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub step: u64,
    /// Free-form recorded decisions (activation choices, sampling feeds, ...).
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SetManifest {
    pub name: String,
    pub tensors: Vec<TensorMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

/// In-memory image of a checkpoint.
pub struct CheckpointData<S: Real> {
    pub sets: Vec<(String, ParamStore<S>)>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub step: u64,
    pub notes: BTreeMap<String, String>,
}

impl<S: Real> CheckpointData<S> {
    pub fn set(&self, name: &str) -> Option<&ParamStore<S>> {
        self.sets.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn take_set(&mut self, name: &str) -> Option<ParamStore<S>> {
        let idx = self.sets.iter().position(|(n, _)| n == name)?;
        Some(self.sets.remove(idx).1)
    }
}

pub fn save_checkpoint<S: Real>(dir: &Path, data: &CheckpointData<S>) -> Result<(), NnError> {
    std::fs::create_dir_all(dir)?;
    let mut sets = Vec::new();
    for (set_name, store) in &data.sets {
        let mut tensors = Vec::new();
        for (name, tensor) in store.iter() {
            tensors.push(TensorMeta {
                name: name.to_string(),
                shape: tensor.shape.clone(),
            });
            let mut file = std::fs::File::create(dir.join(format!("{set_name}.{name}.bin")))?;
            let mut bytes = Vec::with_capacity(tensor.numel() * 4);
            for v in &tensor.data {
                bytes.extend_from_slice(&v.as_f32().to_le_bytes());
            }
            file.write_all(&bytes)?;
        }
        sets.push(SetManifest {
            name: set_name.clone(),
            tensors,
        });
    }
    let manifest = Manifest {
        format_version: 1,
        dtype: "f32".to_string(),
        sets,
        config: data.config.clone(),
        seed: data.seed,
        step: data.step,
        notes: data.notes.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| NnError::Checkpoint {
        reason: e.to_string(),
    })?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_checkpoint<S: Real>(dir: &Path) -> Result<CheckpointData<S>, NnError> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| NnError::Checkpoint {
        reason: format!("{}: {e}", manifest_path.display()),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| NnError::Checkpoint {
        reason: format!("bad manifest: {e}"),
    })?;
    if manifest.dtype != "f32" {
        return Err(NnError::Checkpoint {
            reason: format!("unsupported dtype {:?}", manifest.dtype),
        });
    }
    let mut sets = Vec::new();
    for set in &manifest.sets {
        let mut store = ParamStore::new();
        for meta in &set.tensors {
            let path = dir.join(format!("{}.{}.bin", set.name, meta.name));
            let mut bytes = Vec::new();
            std::fs::File::open(&path)
                .map_err(|e| NnError::Checkpoint {
                    reason: format!("{}: {e}", path.display()),
                })?
                .read_to_end(&mut bytes)?;
            let numel: usize = meta.shape.iter().product();
            if bytes.len() != numel * 4 {
                return Err(NnError::Checkpoint {
                    reason: format!(
                        "{}: expected {} bytes for shape {:?}, found {}",
                        path.display(),
                        numel * 4,
                        meta.shape,
                        bytes.len()
                    ),
                });
            }
            let data: Vec<S> = bytes
                .chunks_exact(4)
                .map(|c| S::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            store.add(&meta.name, Tensor::new(meta.shape.clone(), data));
        }
        sets.push((set.name.clone(), store));
    }
    Ok(CheckpointData {
        sets,
        config: manifest.config,
        seed: manifest.seed,
        step: manifest.step,
        notes: manifest.notes,
    })
}
