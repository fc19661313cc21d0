use crate::{
    charge_neutrality, match_rate, molecule_connectivity, structural_validity, uniqueness_key,
    MetricsError, NeutralityVerdict, TABLE_VERSION,
};
use atomgen_geom::AtomicSystem;
use serde::Serialize;
use std::collections::BTreeSet;

/// Per-sample metric flags, emitted one JSONL line per sample.
#[derive(Debug, Clone, Serialize)]
pub struct SampleFlags {
    pub index: usize,
    pub periodic: bool,
    pub structural_valid: bool,
    /// Neutrality verdict: "neutral", "not_neutral", or "indeterminate".
    pub neutrality: String,
    pub single_element: bool,
    pub comp_valid: bool,
    pub overall_valid: bool,
    /// Connectivity for molecules; None for crystals.
    pub connected: Option<bool>,
    pub unique_key: String,
    /// Reconstruction match against the paired original, when provided.
    pub matched: Option<bool>,
    pub rmsd: Option<f64>,
}

/// Aggregated validity/uniqueness/match statistics over a sample set.
///
/// Compositional validity counts multi-element systems whose composition
/// admits a charge-neutral oxidation assignment; single-element systems are
/// tallied separately and excluded from that count. Overall validity is
/// structural AND compositional, so `overall <= min(structural, comp)`
/// holds by construction. Uniqueness is measured among overall-valid
/// samples.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationReport {
    pub n_samples: usize,
    pub n_molecules: usize,
    pub n_crystals: usize,
    pub n_structural_valid: usize,
    pub n_comp_valid: usize,
    pub n_single_element: usize,
    pub n_indeterminate: usize,
    pub n_overall_valid: usize,
    pub n_unique_among_valid: usize,
    pub n_connected_molecules: usize,
    pub n_matched: Option<usize>,
    pub structural_validity_rate: f64,
    pub comp_validity_rate: f64,
    pub overall_validity_rate: f64,
    pub uniqueness_rate: f64,
    pub connectivity_rate: f64,
    pub match_rate: Option<f64>,
    pub mean_matched_rmsd: Option<f64>,
    /// Echo of every threshold the metrics used, for reproducibility.
    pub config: MetricsConfigEcho,
    #[serde(skip)]
    pub per_sample: Vec<SampleFlags>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsConfigEcho {
    pub min_pair_distance: f64,
    pub min_cell_volume: f64,
    pub bond_tolerance: f64,
    pub mol_rmsd_threshold: f64,
    pub cell_length_threshold: f64,
    pub cell_angle_threshold_deg: f64,
    pub frac_deviation_threshold: f64,
    pub tables_version: u32,
}

impl Default for MetricsConfigEcho {
    fn default() -> Self {
        MetricsConfigEcho {
            min_pair_distance: crate::MIN_PAIR_DISTANCE,
            min_cell_volume: crate::MIN_CELL_VOLUME,
            bond_tolerance: crate::BOND_TOLERANCE,
            mol_rmsd_threshold: crate::matching::MOL_RMSD_THRESHOLD,
            cell_length_threshold: crate::matching::CELL_LENGTH_THRESHOLD,
            cell_angle_threshold_deg: crate::matching::CELL_ANGLE_THRESHOLD_DEG,
            frac_deviation_threshold: crate::matching::FRAC_DEVIATION_THRESHOLD,
            tables_version: TABLE_VERSION,
        }
    }
}

/// Run every per-sample metric and aggregate. When `originals` is given it
/// must pair positionally with `systems` (the reconstruction workflow).
pub fn aggregate_report(
    systems: &[AtomicSystem],
    originals: Option<&[AtomicSystem]>,
) -> Result<GenerationReport, MetricsError> {
    if let Some(orig) = originals {
        if orig.len() != systems.len() {
            return Err(MetricsError::PairingMismatch {
                originals: orig.len(),
                samples: systems.len(),
            });
        }
    }

    let mut per_sample = Vec::with_capacity(systems.len());
    for (index, system) in systems.iter().enumerate() {
        let structural = structural_validity(system);
        let verdict = charge_neutrality(&system.atom_types);
        let single_element = system
            .atom_types
            .iter()
            .collect::<BTreeSet<_>>()
            .len()
            == 1;
        let comp_valid = !single_element && verdict.is_neutral();
        let connected = (!system.periodic).then(|| molecule_connectivity(system));
        let (matched, rmsd) = match originals {
            Some(orig) => {
                let out = match_rate(&orig[index], system);
                (Some(out.matched), Some(out.rmsd))
            }
            None => (None, None),
        };
        per_sample.push(SampleFlags {
            index,
            periodic: system.periodic,
            structural_valid: structural,
            neutrality: match verdict {
                NeutralityVerdict::Neutral => "neutral",
                NeutralityVerdict::NotNeutral => "not_neutral",
                NeutralityVerdict::Indeterminate => "indeterminate",
            }
            .to_string(),
            single_element,
            comp_valid,
            overall_valid: structural && comp_valid,
            connected,
            unique_key: uniqueness_key(system),
            matched,
            rmsd,
        });
    }

    let n = systems.len();
    let rate = |count: usize, denom: usize| {
        if denom == 0 {
            0.0
        } else {
            count as f64 / denom as f64
        }
    };
    let n_molecules = per_sample.iter().filter(|s| !s.periodic).count();
    let n_structural = per_sample.iter().filter(|s| s.structural_valid).count();
    let n_comp = per_sample.iter().filter(|s| s.comp_valid).count();
    let n_single = per_sample.iter().filter(|s| s.single_element).count();
    let n_indet = per_sample
        .iter()
        .filter(|s| s.neutrality == "indeterminate")
        .count();
    let n_overall = per_sample.iter().filter(|s| s.overall_valid).count();
    let n_connected = per_sample
        .iter()
        .filter(|s| s.connected == Some(true))
        .count();
    let valid_keys: BTreeSet<&str> = per_sample
        .iter()
        .filter(|s| s.overall_valid)
        .map(|s| s.unique_key.as_str())
        .collect();
    let n_unique = valid_keys.len();
    let (n_matched, match_rate_v, mean_rmsd) = match originals {
        Some(_) => {
            let matched = per_sample.iter().filter(|s| s.matched == Some(true)).count();
            let rmsds: Vec<f64> = per_sample
                .iter()
                .filter(|s| s.matched == Some(true))
                .filter_map(|s| s.rmsd)
                .filter(|r| r.is_finite())
                .collect();
            let mean = if rmsds.is_empty() {
                None
            } else {
                Some(rmsds.iter().sum::<f64>() / rmsds.len() as f64)
            };
            (Some(matched), Some(rate(matched, n)), mean)
        }
        None => (None, None, None),
    };

    Ok(GenerationReport {
        n_samples: n,
        n_molecules,
        n_crystals: n - n_molecules,
        n_structural_valid: n_structural,
        n_comp_valid: n_comp,
        n_single_element: n_single,
        n_indeterminate: n_indet,
        n_overall_valid: n_overall,
        n_unique_among_valid: n_unique,
        n_connected_molecules: n_connected,
        n_matched,
        structural_validity_rate: rate(n_structural, n),
        comp_validity_rate: rate(n_comp, n),
        overall_validity_rate: rate(n_overall, n),
        uniqueness_rate: rate(n_unique, n_overall),
        connectivity_rate: rate(n_connected, n_molecules),
        match_rate: match_rate_v,
        mean_matched_rmsd: mean_rmsd,
        config: MetricsConfigEcho::default(),
        per_sample,
    })
}
