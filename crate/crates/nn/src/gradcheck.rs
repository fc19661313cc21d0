use crate::{ParamStore, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probes: usize,
}

/// Compare reverse-mode gradients against central finite differences on a
/// seeded random subsample of parameter entries.
///
/// `loss_and_grads` must be a deterministic function of the store (freeze any
/// sampling noise before calling); it returns the scalar loss and, when asked,
/// the full gradient set in store order. Relative error uses a 1e-6 floor so
/// probes that land on near-zero gradients stay meaningful without drowning
/// in finite-difference round-off.
pub fn grad_check<S, F>(
    mut loss_and_grads: F,
    store: &mut ParamStore<S>,
    n_probes: usize,
    eps: f64,
    seed: u64,
) -> GradCheckReport
where
    S: Real,
    F: FnMut(&ParamStore<S>, bool) -> (f64, Option<Vec<Vec<S>>>),
{
    let (_, grads) = loss_and_grads(store, true);
    let grads = grads.expect("gradients requested");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let sizes: Vec<usize> = (0..store.len())
        .map(|i| store.tensor_at(i).numel())
        .collect();
    let total: usize = sizes.iter().sum();

    let mut max_rel_err = 0.0f64;
    let probes = n_probes.min(total);
    for _ in 0..probes {
        let flat = rng.random_range(0..total);
        let (mut pi, mut offset) = (0usize, flat);
        while offset >= sizes[pi] {
            offset -= sizes[pi];
            pi += 1;
        }

        let original = store.tensor_at(pi).data[offset];
        store.tensor_at_mut(pi).data[offset] = original + S::from_f64(eps);
        let (plus, _) = loss_and_grads(store, false);
        store.tensor_at_mut(pi).data[offset] = original - S::from_f64(eps);
        let (minus, _) = loss_and_grads(store, false);
        store.tensor_at_mut(pi).data[offset] = original;

        let fd = (plus - minus) / (2.0 * eps);
        let ad = grads[pi][offset].as_f64();
        let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6);
        if rel > max_rel_err {
            max_rel_err = rel;
        }
    }

    GradCheckReport {
        max_rel_err,
        probes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Tape, Tensor};
    use rand::Rng;

    #[test]
    fn linear_sum_is_exact() {
        // loss = sum(W x): gradient of W[i][j] is exactly x[j].
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        store.add(
            "w",
            Tensor::new(vec![4, 3], (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()),
        );
        let x = Tensor::new(vec![1, 4], vec![0.5, -1.25, 2.0, 0.125]);
        let report = grad_check(
            |s: &ParamStore<f64>, want_grads| {
                let mut tape = Tape::new();
                let p = s.load(&mut tape);
                let xv = tape.constant(x.clone());
                let y = tape.matmul(xv, p.var("w"));
                let loss = tape.sum_all(y);
                let value = tape.value(loss).data[0];
                let grads = want_grads.then(|| {
                    tape.backward(loss).unwrap();
                    p.grads(&tape)
                });
                (value, grads)
            },
            &mut store,
            12,
            1e-6,
            1,
        );
        // Both sides are exact linear functions; agreement to fd round-off
        // (~1e-16 / 2e-6 per unit of loss).
        assert!(report.max_rel_err < 1e-8, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn two_layer_mlp_mse_within_1e6() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::<f64>::new();
        store.add_linear("fc1", 6, 16, &mut rng);
        store.add_linear("fc2", 16, 4, &mut rng);
        let x = Tensor::new(
            vec![3, 6],
            (0..18).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let target = Tensor::new(
            vec![3, 4],
            (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let report = grad_check(
            |s: &ParamStore<f64>, want_grads| {
                let mut tape = Tape::new();
                let p = s.load(&mut tape);
                let xv = tape.constant(x.clone());
                let h = crate::layers::linear(&mut tape, &p, "fc1", xv);
                let h = tape.gelu(h);
                let y = crate::layers::linear(&mut tape, &p, "fc2", h);
                let t = tape.constant(target.clone());
                let d = tape.sub(y, t);
                let sq = tape.mul(d, d);
                let loss = tape.sum_all(sq);
                let value = tape.value(loss).data[0];
                let grads = want_grads.then(|| {
                    tape.backward(loss).unwrap();
                    p.grads(&tape)
                });
                (value, grads)
            },
            &mut store,
            60,
            1e-5,
            2,
        );
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
        assert_eq!(report.probes, 60);
    }
}
