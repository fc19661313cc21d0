use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use atomgen_data::{
    canonicalize_record, load_jsonl, parse_cif_lite, parse_xyz, save_jsonl, DatasetRecord,
};
use std::path::{Path, PathBuf};

/// Convert every source into canonical JSONL: crystals Niggli-reduced with
/// wrapped fractional coordinates, molecules passed through (optionally with
/// explicit hydrogens stripped), ids taken from the source file names.
/// Prints per-format counts.
pub fn run(
    sources: &[PathBuf],
    format: &str,
    out: &Path,
    n_max: usize,
    drop_hydrogens: bool,
) -> Result<()> {
    let mut files = Vec::new();
    for src in sources {
        if src.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(src)
                .with_context(|| format!("reading {}", src.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(src.clone());
        }
    }

    let mut records: Vec<DatasetRecord> = Vec::new();
    let (mut n_xyz, mut n_cif, mut n_jsonl, mut n_skipped) = (0usize, 0usize, 0usize, 0usize);
    for file in &files {
        let ext = file
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let kind = match format {
            "auto" => ext.as_str(),
            explicit => explicit,
        };
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("unnamed")
            .to_string();
        match kind {
            "xyz" => {
                let text = std::fs::read_to_string(file)?;
                let system =
                    parse_xyz(&text).with_context(|| format!("parsing {}", file.display()))?;
                records.push(DatasetRecord::new(stem, system));
                n_xyz += 1;
            }
            "cif" => {
                let text = std::fs::read_to_string(file)?;
                let system = parse_cif_lite(&text)
                    .with_context(|| format!("parsing {}", file.display()))?;
                records.push(DatasetRecord::new(stem, system));
                n_cif += 1;
            }
            "jsonl" => {
                let loaded =
                    load_jsonl(file).with_context(|| format!("loading {}", file.display()))?;
                n_jsonl += loaded.len();
                records.extend(loaded);
            }
            other => {
                if format == "auto" {
                    n_skipped += 1;
                    continue;
                }
                bail!("unknown import format {other:?} (expected xyz, cif, or jsonl)");
            }
        }
    }

    if drop_hydrogens {
        for r in records.iter_mut() {
            if r.system.periodic {
                continue;
            }
            let keep: Vec<usize> = (0..r.system.n_atoms())
                .filter(|&i| r.system.atom_types[i] != 1)
                .collect();
            if keep.is_empty() || keep.len() == r.system.n_atoms() {
                continue;
            }
            let types = keep.iter().map(|&i| r.system.atom_types[i]).collect();
            let cart = keep.iter().map(|&i| r.system.cart_coords[i]).collect();
            r.system = atomgen_geom::AtomicSystem::molecule(types, cart)?;
        }
    }

    let mut canonical = Vec::with_capacity(records.len());
    for r in &records {
        let c = canonicalize_record(r).with_context(|| format!("canonicalizing {}", r.id))?;
        c.validate(n_max)?;
        canonical.push(c);
    }
    save_jsonl(out, &canonical)?;

    if canonical.is_empty() {
        eprintln!("warning: no records imported; wrote an empty corpus");
    }
    println!(
        "imported {} records ({} xyz, {} cif, {} jsonl rows, {} skipped) -> {}",
        canonical.len(),
        n_xyz,
        n_cif,
        n_jsonl,
        n_skipped,
        out.display()
    );

    let mut manifest = RunManifest::new(
        "import",
        0,
        serde_json::json!({
            "format": format,
            "n_max": n_max,
            "drop_hydrogens": drop_hydrogens,
        }),
    );
    for f in &files {
        manifest = manifest.input(f);
    }
    manifest.output(out).write_next_to(out)?;
    Ok(())
}
