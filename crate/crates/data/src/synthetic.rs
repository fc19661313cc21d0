use crate::{DataError, DatasetRecord};
use atomgen_geom::{
    lattice_params_to_matrix, min_image_distance, niggli_reduce, wrap_fractional, AtomicSystem,
    LatticeParams, Vec3,
};
use rand::Rng;

/// Seeded corpus of well-separated random molecules for smoke tests and
/// desk-scale convergence runs. Atom types draw from {H, C, N, O, F}; all
/// pair distances stay above 1.2 Å.
pub fn synthetic_molecules<R: Rng>(
    count: usize,
    max_atoms: usize,
    rng: &mut R,
) -> Result<Vec<DatasetRecord>, DataError> {
    let palette = [1usize, 6, 7, 8, 9];
    let min_atoms = 4.min(max_atoms);
    let mut records = Vec::with_capacity(count);
    for idx in 0..count {
        let n = rng.random_range(min_atoms..=max_atoms);
        let mut coords: Vec<Vec3> = Vec::with_capacity(n);
        while coords.len() < n {
            let candidate = [
                rng.random_range(-2.2..2.2),
                rng.random_range(-2.2..2.2),
                rng.random_range(-2.2..2.2),
            ];
            let ok = coords.iter().all(|c| {
                let d2: f64 = (0..3).map(|k| (c[k] - candidate[k]).powi(2)).sum();
                d2 >= 1.2 * 1.2
            });
            if ok {
                coords.push(candidate);
            }
        }
        let types: Vec<usize> = (0..n)
            .map(|_| palette[rng.random_range(0..palette.len())])
            .collect();
        let system = AtomicSystem::molecule(types, coords)?;
        records.push(DatasetRecord::new(format!("mol-{idx:04}"), system));
    }
    Ok(records)
}

/// Seeded corpus of random crystals with Niggli-reduced cells and minimum-
/// image pair separations above 1.5 Å.
pub fn synthetic_crystals<R: Rng>(
    count: usize,
    max_atoms: usize,
    rng: &mut R,
) -> Result<Vec<DatasetRecord>, DataError> {
    let palette = [8usize, 9, 11, 17, 19, 20, 22, 38];
    let min_atoms = 2.min(max_atoms);
    let mut records = Vec::with_capacity(count);
    for idx in 0..count {
        let n = rng.random_range(min_atoms..=max_atoms);
        let lattice = loop {
            let params = LatticeParams::new(
                [
                    rng.random_range(3.8..6.2),
                    rng.random_range(3.8..6.2),
                    rng.random_range(3.8..6.2),
                ],
                [
                    rng.random_range(80.0..100.0),
                    rng.random_range(80.0..100.0),
                    rng.random_range(80.0..100.0),
                ],
            );
            if let Ok(m) = lattice_params_to_matrix(&params) {
                break niggli_reduce(&m)?;
            }
        };
        let mut frac: Vec<Vec3> = Vec::with_capacity(n);
        while frac.len() < n {
            let candidate = [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ];
            let ok = frac
                .iter()
                .all(|f| min_image_distance(&lattice, f, &candidate) >= 1.5);
            if ok {
                frac.push(candidate);
            }
        }
        let frac = wrap_fractional(&frac);
        let types: Vec<usize> = (0..n)
            .map(|_| palette[rng.random_range(0..palette.len())])
            .collect();
        let system = AtomicSystem::crystal(types, frac, lattice)?;
        records.push(DatasetRecord::new(format!("cry-{idx:04}"), system));
    }
    Ok(records)
}

/// Mixed corpus: `n_molecules` molecules followed by `n_crystals` crystals.
pub fn synthetic_corpus<R: Rng>(
    n_molecules: usize,
    mol_max_atoms: usize,
    n_crystals: usize,
    cry_max_atoms: usize,
    rng: &mut R,
) -> Result<Vec<DatasetRecord>, DataError> {
    let mut records = synthetic_molecules(n_molecules, mol_max_atoms, rng)?;
    records.extend(synthetic_crystals(n_crystals, cry_max_atoms, rng)?);
    Ok(records)
}
