use atomgen_data::{Batch, ClassLabel};
use atomgen_geom::lattice_matrix_to_params;
use atomgen_nn::{Real, Tensor};

/// A batch lifted into engine tensors plus the per-sample targets the losses
/// need (lattice parameters with angles already in radians).
pub struct BatchTensors<S: Real> {
    pub b: usize,
    pub n: usize,
    pub atom_types: Vec<usize>,
    pub pad_mask: Vec<bool>,
    pub n_atoms: Vec<usize>,
    pub class_labels: Vec<ClassLabel>,
    pub cart: Tensor<S>,
    pub frac: Tensor<S>,
    /// [B, 3] true cell lengths (zeros for molecules).
    pub lengths: Tensor<S>,
    /// [B, 3] true cell angles in radians (zeros for molecules).
    pub angles_rad: Tensor<S>,
}

impl<S: Real> BatchTensors<S> {
    pub fn from_batch(batch: &Batch) -> Self {
        let (b, n) = (batch.batch_size, batch.n_max);
        let mut lengths = vec![0.0f64; b * 3];
        let mut angles = vec![0.0f64; b * 3];
        for (bi, class) in batch.class_labels.iter().enumerate() {
            if *class == ClassLabel::Crystal {
                // Import validation guarantees a positive-determinant cell.
                let p = lattice_matrix_to_params(&batch.lattice[bi])
                    .expect("crystal batch rows carry valid lattices");
                let rad = p.angles_rad();
                for k in 0..3 {
                    lengths[bi * 3 + k] = p.lengths[k];
                    angles[bi * 3 + k] = rad[k];
                }
            }
        }
        BatchTensors {
            b,
            n,
            atom_types: batch.atom_types.clone(),
            pad_mask: batch.pad_mask.clone(),
            n_atoms: batch.n_atoms.clone(),
            class_labels: batch.class_labels.clone(),
            cart: Tensor::from_f64(vec![b, n, 3], &batch.cart),
            frac: Tensor::from_f64(vec![b, n, 3], &batch.frac),
            lengths: Tensor::from_f64(vec![b, 3], &lengths),
            angles_rad: Tensor::from_f64(vec![b, 3], &angles),
        }
    }

    /// Constant [B, N, D] with 1 on real atoms and 0 on padding.
    pub fn mask_expanded(&self, d: usize) -> Tensor<S> {
        let mut data = vec![S::zero(); self.b * self.n * d];
        for (row, &real) in self.pad_mask.iter().enumerate() {
            if real {
                for v in data[row * d..(row + 1) * d].iter_mut() {
                    *v = S::one();
                }
            }
        }
        Tensor::new(vec![self.b, self.n, d], data)
    }

    /// Constant [B, D] filled per sample with `f(n_atoms, class)`.
    pub fn per_sample(&self, d: usize, f: impl Fn(usize, ClassLabel) -> f64) -> Tensor<S> {
        let mut data = vec![S::zero(); self.b * d];
        for bi in 0..self.b {
            let v = S::from_f64(f(self.n_atoms[bi], self.class_labels[bi]));
            for k in 0..d {
                data[bi * d + k] = v;
            }
        }
        Tensor::new(vec![self.b, d], data)
    }
}
