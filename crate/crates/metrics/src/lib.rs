//! Evaluation suite for generated systems: geometric structural validity
//! (minimum-image aware), charge-neutrality compositional validity,
//! molecule connectivity, uniqueness keys, reconstruction match rate, and
//! the aggregated report.
//!
//! Per-sample metrics are pure functions; aggregation is embarrassingly
//! parallel over samples.

mod charge;
mod matching;
mod report;
mod tables;
mod unique;
mod validity;

pub use charge::{charge_neutrality, NeutralityVerdict};
pub use matching::{match_rate, MatchOutcome};
pub use report::{aggregate_report, GenerationReport, MetricsConfigEcho, SampleFlags};
pub use tables::{covalent_radius, oxidation_states, OxidationTable, TABLE_VERSION};
pub use unique::{uniqueness, uniqueness_key};
pub use validity::{
    molecule_connectivity, structural_validity, BOND_TOLERANCE, MIN_CELL_VOLUME,
    MIN_PAIR_DISTANCE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("geometry error: {0}")]
    Geom(#[from] atomgen_geom::GeomError),

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("originals/samples length mismatch: {originals} vs {samples}")]
    PairingMismatch { originals: usize, samples: usize },
}
