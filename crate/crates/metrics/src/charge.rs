use crate::tables::oxidation_states;
use std::collections::BTreeMap;

/// Outcome of the charge-neutrality search. `Indeterminate` marks an element
/// outside the bundled table and is distinct from a definite negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeutralityVerdict {
    Neutral,
    NotNeutral,
    Indeterminate,
}

impl NeutralityVerdict {
    pub fn is_neutral(self) -> bool {
        self == NeutralityVerdict::Neutral
    }
}

/// Charge-neutrality half of compositional validity: true iff some
/// assignment of one oxidation state per element species (uniform within a
/// species) makes the stoichiometry-weighted sum zero. Exhaustive DFS with
/// reachable-range pruning.
///
/// Single-element compositions are neutral only if 0 were an allowed state;
/// the bundled table lists no zero states, so callers report those systems
/// separately instead of counting them compositionally valid.
pub fn charge_neutrality(atom_types: &[usize]) -> NeutralityVerdict {
    assert!(!atom_types.is_empty(), "composition must be non-empty");
    let mut composition: BTreeMap<usize, i64> = BTreeMap::new();
    for &t in atom_types {
        *composition.entry(t).or_insert(0) += 1;
    }

    let mut species: Vec<(i64, &[i32])> = Vec::with_capacity(composition.len());
    for (&element, &count) in &composition {
        match oxidation_states(element) {
            Some(states) => species.push((count, states)),
            None => return NeutralityVerdict::Indeterminate,
        }
    }
    if species.iter().any(|(_, s)| s.is_empty()) {
        return NeutralityVerdict::NotNeutral;
    }
    if species.len() == 1 {
        let (_, states) = species[0];
        return if states.contains(&0) {
            NeutralityVerdict::Neutral
        } else {
            NeutralityVerdict::NotNeutral
        };
    }

    // Suffix bounds for pruning: the range of charge still reachable.
    let mut min_tail = vec![0i64; species.len() + 1];
    let mut max_tail = vec![0i64; species.len() + 1];
    for i in (0..species.len()).rev() {
        let (count, states) = species[i];
        let lo = states.iter().map(|&s| count * s as i64).min().unwrap();
        let hi = states.iter().map(|&s| count * s as i64).max().unwrap();
        min_tail[i] = min_tail[i + 1] + lo;
        max_tail[i] = max_tail[i + 1] + hi;
    }

    fn search(
        species: &[(i64, &[i32])],
        min_tail: &[i64],
        max_tail: &[i64],
        idx: usize,
        acc: i64,
    ) -> bool {
        if idx == species.len() {
            return acc == 0;
        }
        // Prune when zero is no longer reachable from here.
        if acc + min_tail[idx] > 0 || acc + max_tail[idx] < 0 {
            return false;
        }
        let (count, states) = species[idx];
        states
            .iter()
            .any(|&s| search(species, min_tail, max_tail, idx + 1, acc + count * s as i64))
    }

    if search(&species, &min_tail, &max_tail, 0, 0) {
        NeutralityVerdict::Neutral
    } else {
        NeutralityVerdict::NotNeutral
    }
}
