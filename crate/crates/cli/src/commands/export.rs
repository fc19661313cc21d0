use crate::manifest::RunManifest;
use anyhow::{Context, Result};
use atomgen_data::load_jsonl;
use atomgen_geom::AtomVocabulary;
use atomgen_model::export_latents;
use std::io::Write as _;
use std::path::Path;

/// Deterministic-mode latent export: header then one CSV row per real atom,
/// `id,atom_index,element,class,z1..zd`. Byte-stable across reruns.
pub fn run(vae_dir: &Path, data: &Path, out: &Path) -> Result<()> {
    let vae = super::train::load_vae(vae_dir)?;
    let records = load_jsonl(data).with_context(|| format!("loading {}", data.display()))?;
    let n_max = records
        .iter()
        .map(|r| r.system.n_atoms())
        .max()
        .unwrap_or(1);
    let rows = export_latents(&vae, &records, n_max)?;

    let vocab = AtomVocabulary::new();
    let d = vae.cfg.latent_dim;
    let mut file = std::fs::File::create(out)?;
    let mut header = String::from("id,atom_index,element,class");
    for k in 1..=d {
        header.push_str(&format!(",z{k}"));
    }
    writeln!(file, "{header}")?;
    for (id, atom_index, element, class, z) in &rows {
        let mut line = format!(
            "{id},{atom_index},{},{}",
            vocab.symbol(*element)?,
            class.name()
        );
        for v in z {
            line.push_str(&format!(",{v}"));
        }
        writeln!(file, "{line}")?;
    }
    println!("wrote {} latent rows ({} channels) -> {}", rows.len(), d, out.display());

    RunManifest::new("export-latents", 0, serde_json::json!({"latent_dim": d}))
        .input(vae_dir)
        .input(data)
        .output(out)
        .write_next_to(out)?;
    Ok(())
}
