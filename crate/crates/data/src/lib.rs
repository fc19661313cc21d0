//! Dataset plumbing: XYZ / CIF-lite importers, the canonical JSONL record
//! format shared by molecules and crystals, padded batch construction, and
//! atom-count statistics used when drawing system sizes at sampling time.
//!
//! Parsing and batching are pure given a seed; independent batch streams can
//! run in parallel as long as each owns its rng.

mod batch;
mod cif;
mod config;
mod error;
mod histogram;
mod jsonl;
mod record;
mod synthetic;
mod xyz;

pub use batch::{make_batches, Batch};
pub use cif::{parse_cif_lite, write_cif_lite};
pub use config::{DitPreset, DitSection, LossSection, RunConfig, SampleSection, TrainSection, VaeSection};
pub use error::DataError;
pub use histogram::AtomCountHistogram;
pub use jsonl::{load_jsonl, save_jsonl};
pub use record::{canonicalize_record, ClassLabel, DatasetRecord};
pub use synthetic::{synthetic_corpus, synthetic_crystals, synthetic_molecules};
pub use xyz::{parse_xyz, write_xyz};
