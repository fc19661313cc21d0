use crate::{ClassLabel, DataError, DatasetRecord};
use atomgen_geom::Mat3;
use rand::seq::SliceRandom;
use rand::Rng;

/// Padded batch of systems. Row-major layouts: `atom_types[b * n_max + i]`,
/// `cart[(b * n_max + i) * 3 + k]`, `lattice[b]` as a 3x3 matrix.
///
/// Pad positions carry atom type 0 and zero coordinates; `pad_mask` is true
/// exactly for the first `n_atoms[b]` slots of each row. Every loss and
/// attention op downstream must honor the mask.
#[derive(Debug, Clone)]
pub struct Batch {
    pub batch_size: usize,
    pub n_max: usize,
    pub atom_types: Vec<usize>,
    pub cart: Vec<f64>,
    pub frac: Vec<f64>,
    pub lattice: Vec<Mat3>,
    pub class_labels: Vec<ClassLabel>,
    pub pad_mask: Vec<bool>,
    pub n_atoms: Vec<usize>,
}

impl Batch {
    /// Assemble one padded batch preserving record order.
    pub fn from_records(records: &[&DatasetRecord], n_max: usize) -> Result<Batch, DataError> {
        let b = records.len();
        let mut batch = Batch {
            batch_size: b,
            n_max,
            atom_types: vec![0; b * n_max],
            cart: vec![0.0; b * n_max * 3],
            frac: vec![0.0; b * n_max * 3],
            lattice: vec![[[0.0; 3]; 3]; b],
            class_labels: Vec::with_capacity(b),
            pad_mask: vec![false; b * n_max],
            n_atoms: Vec::with_capacity(b),
        };
        for (bi, record) in records.iter().enumerate() {
            let n = record.system.n_atoms();
            if n > n_max {
                return Err(DataError::TooManyAtoms {
                    id: record.id.clone(),
                    n_atoms: n,
                    n_max,
                });
            }
            for i in 0..n {
                let flat = bi * n_max + i;
                batch.atom_types[flat] = record.system.atom_types[i];
                batch.pad_mask[flat] = true;
                for k in 0..3 {
                    batch.cart[flat * 3 + k] = record.system.cart_coords[i][k];
                    batch.frac[flat * 3 + k] = record.system.frac_coords[i][k];
                }
            }
            batch.lattice[bi] = record.system.lattice;
            batch.class_labels.push(record.class_label);
            batch.n_atoms.push(n);
        }
        Ok(batch)
    }

    pub fn real_atom_count(&self) -> usize {
        self.n_atoms.iter().sum()
    }
}

/// Shuffle records with the caller's seeded rng and emit padded batches.
/// Classes mix freely within a batch; the final batch may be smaller.
pub fn make_batches<R: Rng>(
    records: &[DatasetRecord],
    batch_size: usize,
    n_max: usize,
    rng: &mut R,
) -> Result<Vec<Batch>, DataError> {
    if batch_size == 0 {
        return Err(DataError::Config {
            reason: "batch_size must be >= 1".to_string(),
        });
    }
    for r in records {
        if r.system.n_atoms() > n_max {
            return Err(DataError::TooManyAtoms {
                id: r.id.clone(),
                n_atoms: r.system.n_atoms(),
                n_max,
            });
        }
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&DatasetRecord> = chunk.iter().map(|&i| &records[i]).collect();
            Batch::from_records(&refs, n_max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use atomgen_geom::AtomicSystem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn records(n: usize) -> Vec<DatasetRecord> {
        (0..n)
            .map(|i| {
                let sys = AtomicSystem::molecule(
                    vec![6; i % 3 + 1],
                    (0..i % 3 + 1).map(|j| [j as f64, 0.0, 0.0]).collect(),
                )
                .unwrap();
                DatasetRecord::new(format!("r{i}"), sys)
            })
            .collect()
    }

    #[test]
    fn three_records_batch_two() {
        let recs = records(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = make_batches(&recs, 2, 8, &mut rng).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].batch_size, 2);
        assert_eq!(batches[1].batch_size, 1);
    }

    #[test]
    fn same_seed_same_order() {
        let recs = records(17);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            make_batches(&recs, 4, 8, &mut rng)
                .unwrap()
                .iter()
                .flat_map(|b| b.n_atoms.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6), "different seeds should reorder");
    }

    #[test]
    fn pad_positions_are_clean() {
        let recs = records(9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for batch in make_batches(&recs, 4, 8, &mut rng).unwrap() {
            assert_eq!(
                batch.pad_mask.iter().filter(|&&m| m).count(),
                batch.real_atom_count()
            );
            for b in 0..batch.batch_size {
                for i in 0..batch.n_max {
                    let flat = b * batch.n_max + i;
                    assert_eq!(batch.pad_mask[flat], i < batch.n_atoms[b]);
                    if !batch.pad_mask[flat] {
                        assert_eq!(batch.atom_types[flat], 0);
                        for k in 0..3 {
                            assert_eq!(batch.cart[flat * 3 + k], 0.0);
                            assert_eq!(batch.frac[flat * 3 + k], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn oversized_record_rejected() {
        let recs = records(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            make_batches(&recs, 2, 2, &mut rng),
            Err(DataError::TooManyAtoms { .. })
        ));
    }
}
