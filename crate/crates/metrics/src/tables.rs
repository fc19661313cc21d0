use atomgen_geom::AtomVocabulary;
use std::collections::HashMap;
use std::sync::OnceLock;

pub const TABLE_VERSION: u32 = 1;

const OXIDATION_JSON: &str = include_str!("../data/oxidation_states.json");
const RADII_JSON: &str = include_str!("../data/covalent_radii.json");

/// Common oxidation states per element index (1..=100). Every vocabulary
/// element is present; an empty list auto-fails neutrality (reported as a
/// definite negative, not an indeterminate).
pub struct OxidationTable {
    states: Vec<Vec<i32>>,
}

impl OxidationTable {
    pub fn bundled() -> &'static OxidationTable {
        static TABLE: OnceLock<OxidationTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let raw: HashMap<String, serde_json::Value> =
                serde_json::from_str(OXIDATION_JSON).expect("bundled oxidation table parses");
            let vocab = AtomVocabulary::new();
            let mut states = vec![Vec::new(); 101];
            for (key, value) in &raw {
                if key.starts_with('_') {
                    continue;
                }
                let idx = vocab.index(key).expect("table key is a known element");
                states[idx] = value
                    .as_array()
                    .expect("states are an array")
                    .iter()
                    .map(|v| v.as_i64().expect("integer state") as i32)
                    .collect();
            }
            OxidationTable { states }
        })
    }

    /// States for an element index; `None` marks an index outside the table
    /// (the indeterminate case).
    pub fn states(&self, element: usize) -> Option<&[i32]> {
        self.states.get(element).map(Vec::as_slice)
    }
}

pub fn oxidation_states(element: usize) -> Option<&'static [i32]> {
    if element == 0 {
        return None;
    }
    OxidationTable::bundled().states(element)
}

/// Covalent radius in angstroms for an element index.
pub fn covalent_radius(element: usize) -> Option<f64> {
    static RADII: OnceLock<Vec<f64>> = OnceLock::new();
    let radii = RADII.get_or_init(|| {
        let raw: HashMap<String, serde_json::Value> =
            serde_json::from_str(RADII_JSON).expect("bundled radii table parses");
        let vocab = AtomVocabulary::new();
        let mut out = vec![f64::NAN; 101];
        for (key, value) in &raw {
            if key.starts_with('_') {
                continue;
            }
            let idx = vocab.index(key).expect("table key is a known element");
            out[idx] = value.as_f64().expect("radius is a number");
        }
        out
    });
    match radii.get(element) {
        Some(r) if r.is_finite() => Some(*r),
        _ => None,
    }
}
