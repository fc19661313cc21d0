pub mod eval;
pub mod export;
pub mod import;
pub mod sample;
pub mod train;

use atomgen_data::{load_jsonl, DataError, DatasetRecord, RunConfig};
use atomgen_model::ModelError;
use std::path::Path;

/// Map error chains onto the documented exit codes: 2 for data problems,
/// 3 for numerical failures.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(model_err) = cause.downcast_ref::<ModelError>() {
            return match model_err {
                ModelError::NonFiniteLoss { .. } | ModelError::NonFiniteLatents { .. } => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<atomgen_nn::NnError>().is_some() {
            if matches!(
                cause.downcast_ref::<atomgen_nn::NnError>(),
                Some(atomgen_nn::NnError::NonFiniteGrad { .. })
            ) {
                return 3;
            }
            return 2;
        }
    }
    2
}

/// Resolve the declarative config: optional file, then `--set` overrides,
/// then the `--data` path shorthand.
pub fn resolve_config(
    config_path: Option<&Path>,
    overrides: &[String],
    data: Option<&Path>,
) -> Result<RunConfig, DataError> {
    let mut cfg = match config_path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for spec in overrides {
        cfg.apply_override(spec)?;
    }
    if let Some(d) = data {
        cfg.dataset.train_jsonl = d.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Load and validate the training corpus named by the config.
pub fn load_corpus(cfg: &RunConfig) -> anyhow::Result<Vec<DatasetRecord>> {
    if cfg.dataset.train_jsonl.is_empty() {
        anyhow::bail!("no training corpus: set dataset.train_jsonl or pass --data");
    }
    let path = Path::new(&cfg.dataset.train_jsonl);
    let records = load_jsonl(path)?;
    for r in &records {
        r.validate(cfg.dataset.n_max)?;
    }
    Ok(records)
}
