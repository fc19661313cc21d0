use crate::manifest::RunManifest;
use anyhow::{Context, Result};
use atomgen_data::load_jsonl;
use atomgen_geom::AtomicSystem;
use atomgen_metrics::aggregate_report;
use std::io::Write as _;
use std::path::Path;

/// Run the evaluation suite over a sample file. Completion is exit 0
/// whatever the rates come out to be.
pub fn run(samples_path: &Path, originals_path: Option<&Path>, out: &Path) -> Result<()> {
    let samples = load_jsonl(samples_path)
        .with_context(|| format!("loading samples {}", samples_path.display()))?;
    let systems: Vec<AtomicSystem> = samples.iter().map(|r| r.system.clone()).collect();

    let originals: Option<Vec<AtomicSystem>> = match originals_path {
        Some(p) => {
            let recs =
                load_jsonl(p).with_context(|| format!("loading originals {}", p.display()))?;
            Some(recs.into_iter().map(|r| r.system).collect())
        }
        None => None,
    };

    let report = aggregate_report(&systems, originals.as_deref())?;
    std::fs::write(out, serde_json::to_string_pretty(&report)?)?;

    // Per-sample flags alongside the report, one JSONL row per system.
    let flags_path = flags_path_for(out);
    let mut flags = std::fs::File::create(&flags_path)?;
    for (record, sample_flags) in samples.iter().zip(&report.per_sample) {
        let mut line = serde_json::to_value(sample_flags)?;
        line.as_object_mut()
            .unwrap()
            .insert("id".to_string(), serde_json::json!(record.id));
        writeln!(flags, "{line}")?;
    }

    println!(
        "evaluated {} systems: structural {:.3}, comp {:.3}, overall {:.3}, unique {}{}",
        report.n_samples,
        report.structural_validity_rate,
        report.comp_validity_rate,
        report.overall_validity_rate,
        report.n_unique_among_valid,
        match report.match_rate {
            Some(rate) => format!(", match rate {rate:.3}"),
            None => String::new(),
        }
    );

    let mut manifest = RunManifest::new("eval", 0, serde_json::json!({}))
        .input(samples_path)
        .output(out)
        .output(&flags_path);
    if let Some(p) = originals_path {
        manifest = manifest.input(p);
    }
    manifest.write_next_to(out)?;
    Ok(())
}

fn flags_path_for(report_path: &Path) -> std::path::PathBuf {
    let stem = report_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    report_path.with_file_name(format!("{stem}_per_sample.jsonl"))
}
