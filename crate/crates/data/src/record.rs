use crate::DataError;
use atomgen_geom::{cart_to_frac, niggli_reduce, wrap_fractional, AtomicSystem};
use serde::{Deserialize, Serialize};

/// Class label carried through batching, conditioning, and sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ClassLabel {
    Molecule,
    Crystal,
}

impl ClassLabel {
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Molecule => 0,
            ClassLabel::Crystal => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Molecule => "molecule",
            ClassLabel::Crystal => "crystal",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DataError> {
        match s {
            "molecule" => Ok(ClassLabel::Molecule),
            "crystal" => Ok(ClassLabel::Crystal),
            other => Err(DataError::Config {
                reason: format!("unknown class label {other:?}"),
            }),
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(c: ClassLabel) -> u8 {
        c.index() as u8
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(ClassLabel::Molecule),
            1 => Ok(ClassLabel::Crystal),
            other => Err(format!("class_label must be 0 or 1, got {other}")),
        }
    }
}

/// One corpus entry: an id, the atomic system, and its class label.
/// Invariant: `class_label == Crystal` iff `system.periodic`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub system: AtomicSystem,
    pub class_label: ClassLabel,
}

impl DatasetRecord {
    pub fn new(id: impl Into<String>, system: AtomicSystem) -> Self {
        let class_label = if system.periodic {
            ClassLabel::Crystal
        } else {
            ClassLabel::Molecule
        };
        DatasetRecord {
            id: id.into(),
            system,
            class_label,
        }
    }

    pub fn validate(&self, n_max: usize) -> Result<(), DataError> {
        self.system.validate()?;
        let consistent = (self.class_label == ClassLabel::Crystal) == self.system.periodic;
        if !consistent {
            return Err(DataError::Jsonl {
                line: 0,
                reason: format!(
                    "record {:?}: class_label {} inconsistent with periodic = {}",
                    self.id,
                    self.class_label.name(),
                    self.system.periodic
                ),
            });
        }
        if self.system.n_atoms() > n_max {
            return Err(DataError::TooManyAtoms {
                id: self.id.clone(),
                n_atoms: self.system.n_atoms(),
                n_max,
            });
        }
        Ok(())
    }
}

/// Import-time canonicalization: crystals get a Niggli-reduced cell with
/// fractional coordinates recomputed and wrapped against it. Molecules pass
/// through unchanged, as do crystals whose cell is already reduced (bitwise),
/// which keeps re-imports of exported data byte-stable.
pub fn canonicalize_record(record: &DatasetRecord) -> Result<DatasetRecord, DataError> {
    if !record.system.periodic {
        return Ok(record.clone());
    }
    let reduced = niggli_reduce(&record.system.lattice)?;
    if reduced == record.system.lattice {
        return Ok(record.clone());
    }
    let frac = wrap_fractional(&cart_to_frac(&reduced, &record.system.cart_coords)?);
    let system = AtomicSystem::crystal(record.system.atom_types.clone(), frac, reduced)?;
    Ok(DatasetRecord {
        id: record.id.clone(),
        system,
        class_label: record.class_label,
    })
}
