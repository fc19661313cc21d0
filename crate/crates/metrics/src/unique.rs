use atomgen_geom::{lattice_matrix_to_params, niggli_reduce, AtomicSystem};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Quantization step for molecule pairwise distances (Å).
const MOL_DIST_QUANTUM: f64 = 0.1;
/// Quantization step for Niggli lattice parameters (Å / degrees).
const LATTICE_QUANTUM: f64 = 0.01;
/// Quantization step for fractional pair separations (fractional units).
const FRAC_DIST_QUANTUM: f64 = 0.01;

/// Canonical duplicate-detection key, invariant under rigid rotation,
/// translation, and atom permutation.
///
/// Molecules: sorted composition plus the sorted pairwise-distance multiset
/// quantized to 0.1 Å. Crystals: sorted composition, sorted Niggli-reduced
/// cell parameters quantized to 0.01, and the sorted multiset of
/// minimum-image fractional pair separations quantized to 0.01.
pub fn uniqueness_key(system: &AtomicSystem) -> String {
    let mut key = String::new();
    let mut composition: BTreeMap<usize, usize> = BTreeMap::new();
    for &t in &system.atom_types {
        *composition.entry(t).or_insert(0) += 1;
    }
    for (el, count) in &composition {
        let _ = write!(key, "{el}x{count},");
    }

    if system.periodic {
        let reduced = niggli_reduce(&system.lattice).unwrap_or(system.lattice);
        if let Ok(params) = lattice_matrix_to_params(&reduced) {
            let mut lengths: Vec<i64> = params
                .lengths
                .iter()
                .map(|&v| quantize(v, LATTICE_QUANTUM))
                .collect();
            lengths.sort_unstable();
            let mut angles: Vec<i64> = params
                .angles_deg
                .iter()
                .map(|&v| quantize(v, LATTICE_QUANTUM))
                .collect();
            angles.sort_unstable();
            let _ = write!(key, "|L{lengths:?}{angles:?}");
        } else {
            key.push_str("|L<degenerate>");
        }
        let mut dists = Vec::new();
        let n = system.n_atoms();
        for i in 0..n {
            for j in (i + 1)..n {
                // Minimum-image separation measured in fractional units so
                // the descriptor is exactly rotation-invariant.
                let mut d2 = 0.0;
                for k in 0..3 {
                    let df = system.frac_coords[i][k] - system.frac_coords[j][k];
                    let wrapped = df - df.round();
                    d2 += wrapped * wrapped;
                }
                dists.push(quantize(d2.sqrt(), FRAC_DIST_QUANTUM));
            }
        }
        dists.sort_unstable();
        let _ = write!(key, "|F{dists:?}");
    } else {
        let mut dists = Vec::new();
        let n = system.n_atoms();
        for i in 0..n {
            for j in (i + 1)..n {
                let mut d2 = 0.0;
                for k in 0..3 {
                    let d = system.cart_coords[i][k] - system.cart_coords[j][k];
                    d2 += d * d;
                }
                dists.push(quantize(d2.sqrt(), MOL_DIST_QUANTUM));
            }
        }
        dists.sort_unstable();
        let _ = write!(key, "|D{dists:?}");
    }
    key
}

fn quantize(v: f64, quantum: f64) -> i64 {
    (v / quantum).round() as i64
}

/// Distinct canonical keys over a sample set: (unique count, per-sample keys).
pub fn uniqueness(systems: &[AtomicSystem]) -> (usize, Vec<String>) {
    let keys: Vec<String> = systems.iter().map(uniqueness_key).collect();
    let mut distinct: Vec<&String> = keys.iter().collect();
    distinct.sort_unstable();
    distinct.dedup();
    (distinct.len(), keys)
}
