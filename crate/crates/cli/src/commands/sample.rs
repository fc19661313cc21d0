use crate::manifest::RunManifest;
use anyhow::{Context, Result};
use atomgen_data::{
    load_jsonl, save_jsonl, write_cif_lite, write_xyz, AtomCountHistogram, ClassLabel, RunConfig,
};
use atomgen_model::{
    outcomes_to_records, sample, AtomCountSource, DitConfig, DitModel, SampleOutcome,
    SamplingSpec,
};
use atomgen_nn::load_checkpoint;
use std::path::{Path, PathBuf};

pub struct Args {
    pub dit: PathBuf,
    pub vae: PathBuf,
    pub class: String,
    pub n: usize,
    pub steps: Option<usize>,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub n_atoms: Option<usize>,
    pub data: Option<PathBuf>,
    pub raw_weights: bool,
    pub export_structures: bool,
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let class = ClassLabel::parse(&args.class)?;
    let (dit, dit_cfg) = load_dit(&args.dit, args.raw_weights)?;
    let vae = super::train::load_vae(&args.vae)?;

    let steps = args.steps.unwrap_or(dit_cfg.sample.steps);
    let gamma = args.gamma.unwrap_or(dit_cfg.sample.gamma);

    let atom_counts = match args.n_atoms {
        Some(n) => AtomCountSource::Explicit(n),
        None => {
            let corpus_path = args
                .data
                .clone()
                .unwrap_or_else(|| PathBuf::from(&dit_cfg.dataset.train_jsonl));
            let records = load_jsonl(&corpus_path).with_context(|| {
                format!(
                    "loading corpus {} for the atom-count histogram (pass --n-atoms to skip)",
                    corpus_path.display()
                )
            })?;
            AtomCountSource::Histogram(AtomCountHistogram::from_records(&records, class)?)
        }
    };

    let spec = SamplingSpec {
        class,
        count: args.n,
        steps,
        guidance_scale: gamma,
        atom_counts,
        seed: args.seed,
    };
    let outcomes = sample(&dit, &vae, &spec)?;
    let failures = outcomes
        .iter()
        .filter(|o| matches!(o, SampleOutcome::DecodeFailure(_)))
        .count();

    std::fs::create_dir_all(&args.out)?;
    let records = outcomes_to_records(&outcomes, class.name());
    let samples_path = args.out.join("samples.jsonl");
    save_jsonl(&samples_path, &records)?;

    if args.export_structures {
        let structures = args.out.join("structures");
        std::fs::create_dir_all(&structures)?;
        for record in &records {
            match record.class_label {
                ClassLabel::Molecule => {
                    let text = write_xyz(&record.system, &record.id)?;
                    std::fs::write(structures.join(format!("{}.xyz", record.id)), text)?;
                }
                ClassLabel::Crystal => {
                    let text = write_cif_lite(&record.system, &record.id)?;
                    std::fs::write(structures.join(format!("{}.cif", record.id)), text)?;
                }
            }
        }
    }

    println!(
        "sampled {} systems ({} decode failures) -> {}",
        records.len(),
        failures,
        samples_path.display()
    );

    RunManifest::new(
        "sample",
        args.seed,
        serde_json::json!({
            "class": class.name(),
            "n": args.n,
            "steps": steps,
            "gamma": gamma,
            "n_atoms": args.n_atoms,
            "ema_weights": !args.raw_weights,
            "decode_failures": failures,
        }),
    )
    .input(&args.dit)
    .input(&args.vae)
    .output(&samples_path)
    .write_next_to(&args.out)?;
    Ok(())
}

fn load_dit(dir: &Path, raw_weights: bool) -> Result<(DitModel<f32>, RunConfig)> {
    let mut ckpt = load_checkpoint::<f32>(dir)
        .with_context(|| format!("loading denoiser checkpoint from {}", dir.display()))?;
    let run_cfg: RunConfig = serde_json::from_value(ckpt.config.clone())
        .context("denoiser checkpoint has no usable config echo")?;
    let set = if raw_weights { "params" } else { "ema" };
    let store = ckpt
        .take_set(set)
        .with_context(|| format!("denoiser checkpoint is missing the {set:?} set"))?;
    let model = DitModel::from_store(DitConfig::from_run_config(&run_cfg)?, store)?;
    Ok((model, run_cfg))
}
