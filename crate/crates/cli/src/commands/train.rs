use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use atomgen_model::{train_dit, train_vae, VaeConfig, VaeModel};
use atomgen_nn::load_checkpoint;
use std::path::Path;

pub fn run_vae(
    config_path: Option<&Path>,
    overrides: &[String],
    data: Option<&Path>,
    out: &Path,
    resume: Option<&Path>,
) -> Result<()> {
    let cfg = super::resolve_config(config_path, overrides, data)?;
    let records = super::load_corpus(&cfg)?;
    let resume_data = match resume {
        Some(dir) => Some(load_checkpoint::<f32>(dir).context("loading resume checkpoint")?),
        None => None,
    };
    std::fs::create_dir_all(out)?;
    let outcome = train_vae(&cfg, &records, Some(out), resume_data)?;
    println!(
        "trained VAE for {} steps; final loss {:.6}; checkpoint at {}",
        outcome.steps,
        outcome.final_loss,
        out.display()
    );
    RunManifest::new("train-vae", cfg.seed, serde_json::to_value(&cfg)?)
        .input(&cfg.dataset.train_jsonl)
        .output(out)
        .write_next_to(out)?;
    Ok(())
}

pub fn run_dit(
    config_path: Option<&Path>,
    overrides: &[String],
    data: Option<&Path>,
    vae_dir: &Path,
    out: &Path,
    resume: Option<&Path>,
) -> Result<()> {
    let cfg = super::resolve_config(config_path, overrides, data)?;
    let records = super::load_corpus(&cfg)?;
    if !vae_dir.join("manifest.json").is_file() {
        bail!(
            "stage-2 training needs a stage-1 checkpoint; {} has no manifest.json",
            vae_dir.display()
        );
    }
    let vae = load_vae(vae_dir)?;
    let resume_data = match resume {
        Some(dir) => Some(load_checkpoint::<f32>(dir).context("loading resume checkpoint")?),
        None => None,
    };
    std::fs::create_dir_all(out)?;
    let outcome = train_dit(&cfg, &vae, &records, Some(out), resume_data)?;
    println!(
        "trained denoiser for {} steps; checkpoint (with EMA weights) at {}",
        outcome.steps,
        out.display()
    );
    RunManifest::new("train-dit", cfg.seed, serde_json::to_value(&cfg)?)
        .input(&cfg.dataset.train_jsonl)
        .input(vae_dir)
        .output(out)
        .write_next_to(out)?;
    Ok(())
}

/// Rebuild a VAE from a stage-1 checkpoint: config echo + params set.
pub fn load_vae(dir: &Path) -> Result<VaeModel<f32>> {
    let mut ckpt = load_checkpoint::<f32>(dir)
        .with_context(|| format!("loading VAE checkpoint from {}", dir.display()))?;
    let run_cfg: atomgen_data::RunConfig = serde_json::from_value(ckpt.config.clone())
        .context("VAE checkpoint has no usable config echo")?;
    let store = ckpt
        .take_set("params")
        .context("VAE checkpoint is missing the params set")?;
    Ok(VaeModel::from_store(
        VaeConfig::from_run_config(&run_cfg),
        store,
    )?)
}
