use crate::{ClassLabel, DataError, DatasetRecord};
use atomgen_geom::{AtomicSystem, Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Wire schema: one JSON object per line, field order fixed so that a
/// normalization pass is byte-stable.
#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    class_label: ClassLabel,
    atom_types: Vec<usize>,
    cart: Vec<Vec3>,
    frac: Vec<Vec3>,
    lattice: Mat3,
    periodic: bool,
}

impl From<&DatasetRecord> for RecordLine {
    fn from(r: &DatasetRecord) -> Self {
        RecordLine {
            id: r.id.clone(),
            class_label: r.class_label,
            atom_types: r.system.atom_types.clone(),
            cart: r.system.cart_coords.clone(),
            frac: r.system.frac_coords.clone(),
            lattice: r.system.lattice,
            periodic: r.system.periodic,
        }
    }
}

pub fn load_jsonl(path: &Path) -> Result<Vec<DatasetRecord>, DataError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| DataError::Jsonl {
            line: lineno,
            reason: e.to_string(),
        })?;
        let system = AtomicSystem {
            atom_types: parsed.atom_types,
            cart_coords: parsed.cart,
            frac_coords: parsed.frac,
            lattice: parsed.lattice,
            periodic: parsed.periodic,
        };
        system.validate().map_err(|e| DataError::Jsonl {
            line: lineno,
            reason: e.to_string(),
        })?;
        let crystal = parsed.class_label == ClassLabel::Crystal;
        if crystal != parsed.periodic {
            return Err(DataError::Jsonl {
                line: lineno,
                reason: format!(
                    "class_label {} inconsistent with periodic = {}",
                    parsed.class_label.name(),
                    parsed.periodic
                ),
            });
        }
        records.push(DatasetRecord {
            id: parsed.id,
            system,
            class_label: parsed.class_label,
        });
    }
    Ok(records)
}

pub fn save_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<(), DataError> {
    let mut file = std::fs::File::create(path)?;
    for record in records {
        let line = serde_json::to_string(&RecordLine::from(record)).map_err(|e| {
            DataError::Jsonl {
                line: 0,
                reason: e.to_string(),
            }
        })?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}
