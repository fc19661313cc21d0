use crate::{ClassLabel, DataError, DatasetRecord};
use rand::Rng;
use std::collections::BTreeMap;

/// Empirical distribution over atom counts for one class, used to draw N at
/// sampling time (which the training pipeline otherwise never pins down).
#[derive(Debug, Clone)]
pub struct AtomCountHistogram {
    counts: BTreeMap<usize, usize>,
    total: usize,
}

impl AtomCountHistogram {
    pub fn from_records(
        records: &[DatasetRecord],
        class: ClassLabel,
    ) -> Result<Self, DataError> {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for r in records.iter().filter(|r| r.class_label == class) {
            *counts.entry(r.system.n_atoms()).or_insert(0) += 1;
            total += 1;
        }
        if total == 0 {
            return Err(DataError::EmptyClass {
                class: class.name().to_string(),
            });
        }
        Ok(AtomCountHistogram { counts, total })
    }

    /// Normalized probabilities in ascending order of N.
    pub fn probabilities(&self) -> Vec<(usize, f64)> {
        self.counts
            .iter()
            .map(|(&n, &c)| (n, c as f64 / self.total as f64))
            .collect()
    }

    /// Inverse-CDF draw; reproducible given a seeded rng.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.total as f64;
        let mut acc = 0.0;
        let mut last = 0;
        for (&n, &c) in &self.counts {
            acc += c as f64;
            last = n;
            if u < acc {
                return n;
            }
        }
        last
    }
}
