use crate::tables::covalent_radius;
use atomgen_geom::{lattice_volume, min_image_distance, AtomicSystem};

/// Minimum allowed pairwise distance (Å).
pub const MIN_PAIR_DISTANCE: f64 = 0.5;
/// Minimum allowed cell volume for crystals (Å³).
pub const MIN_CELL_VOLUME: f64 = 0.1;
/// Bond tolerance added to the covalent-radius sum (Å).
pub const BOND_TOLERANCE: f64 = 0.4;

/// Geometric sanity: every pairwise distance >= 0.5 Å (minimum-image over
/// the 3x3x3 shell for crystals) and, for crystals, cell volume >= 0.1 Å³.
pub fn structural_validity(system: &AtomicSystem) -> bool {
    let n = system.n_atoms();
    if system.periodic {
        if lattice_volume(&system.lattice) < MIN_CELL_VOLUME {
            return false;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let d = min_image_distance(
                    &system.lattice,
                    &system.frac_coords[i],
                    &system.frac_coords[j],
                );
                if d < MIN_PAIR_DISTANCE {
                    return false;
                }
            }
        }
    } else {
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist(&system.cart_coords[i], &system.cart_coords[j]);
                if d < MIN_PAIR_DISTANCE {
                    return false;
                }
            }
        }
    }
    true
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Bond-graph connectivity for molecules: atoms i, j bond when their
/// distance is at most r_i + r_j + 0.4 Å; valid iff one connected component.
pub fn molecule_connectivity(system: &AtomicSystem) -> bool {
    assert!(!system.periodic, "connectivity is a molecule metric");
    let n = system.n_atoms();
    if n == 1 {
        return true;
    }
    let radii: Vec<f64> = system
        .atom_types
        .iter()
        .map(|&t| covalent_radius(t).unwrap_or(0.0))
        .collect();
    // Breadth-first flood from atom 0 over the implicit bond graph.
    let mut seen = vec![false; n];
    let mut queue = vec![0usize];
    seen[0] = true;
    let mut visited = 1;
    while let Some(i) = queue.pop() {
        for j in 0..n {
            if !seen[j]
                && dist(&system.cart_coords[i], &system.cart_coords[j])
                    <= radii[i] + radii[j] + BOND_TOLERANCE
            {
                seen[j] = true;
                visited += 1;
                queue.push(j);
            }
        }
    }
    visited == n
}
