use crate::{Real, Tape, Tensor, Var};
use rand::Rng;
use std::collections::HashMap;

/// Named parameter set with deterministic (insertion) ordering. The order
/// is what the optimizer and checkpoint writer iterate, so constructing a
/// model the same way always yields bitwise-identical training runs.
#[derive(Debug, Clone)]
pub struct ParamStore<S: Real> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Real> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name}"
        );
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> &Tensor<S> {
        let idx = self.index[name];
        &self.tensors[idx]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter())
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn tensor_at(&self, idx: usize) -> &Tensor<S> {
        &self.tensors[idx]
    }

    pub fn tensor_at_mut(&mut self, idx: usize) -> &mut Tensor<S> {
        &mut self.tensors[idx]
    }

    pub fn name_at(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    /// Load every parameter onto a tape as differentiable leaves.
    pub fn load(&self, tape: &mut Tape<S>) -> TapeParams {
        let mut vars = Vec::with_capacity(self.tensors.len());
        let mut map = HashMap::with_capacity(self.tensors.len());
        for (name, tensor) in self.iter() {
            let v = tape.param(tensor.clone());
            map.insert(name.to_string(), v);
            vars.push(v);
        }
        TapeParams { vars, map }
    }

    /// Cast into another precision (used to run gradient checks in f64).
    pub fn cast<T: Real>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, tensor) in self.iter() {
            out.add(
                name,
                Tensor::new(
                    tensor.shape.clone(),
                    tensor.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
                ),
            );
        }
        out
    }

    // ---- init helpers -------------------------------------------------

    /// Linear layer: `{name}.w` [fan_in, fan_out] uniform +-1/sqrt(fan_in),
    /// `{name}.b` [fan_out] zeros.
    pub fn add_linear<R: Rng>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w: Vec<S> = (0..fan_in * fan_out)
            .map(|_| S::from_f64(rng.random_range(-bound..bound)))
            .collect();
        self.add(format!("{name}.w"), Tensor::new(vec![fan_in, fan_out], w));
        self.add(format!("{name}.b"), Tensor::zeros(vec![fan_out]));
    }

    /// Zero-initialized linear layer (adaLN modulation, output gates).
    pub fn add_linear_zero(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        self.add(
            format!("{name}.w"),
            Tensor::zeros(vec![fan_in, fan_out]),
        );
        self.add(format!("{name}.b"), Tensor::zeros(vec![fan_out]));
    }

    /// Layer norm affine: `{name}.g` ones, `{name}.b` zeros.
    pub fn add_layer_norm(&mut self, name: &str, dim: usize) {
        self.add(format!("{name}.g"), Tensor::full(vec![dim], S::one()));
        self.add(format!("{name}.b"), Tensor::zeros(vec![dim]));
    }

    /// Embedding table `{name}` [vocab, dim], N(0, std^2) via Box-Muller.
    pub fn add_embedding<R: Rng>(
        &mut self,
        name: &str,
        vocab: usize,
        dim: usize,
        std: f64,
        rng: &mut R,
    ) {
        let data: Vec<S> = (0..vocab * dim)
            .map(|_| {
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random::<f64>();
                S::from_f64((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos() * std)
            })
            .collect();
        self.add(name, Tensor::new(vec![vocab, dim], data));
    }
}

/// Parameter handles on one tape, addressable by name.
pub struct TapeParams {
    vars: Vec<Var>,
    map: HashMap<String, Var>,
}

impl TapeParams {
    /// Assemble from externally created vars (e.g. frozen constants).
    pub fn from_parts(vars: Vec<Var>, map: HashMap<String, Var>) -> Self {
        TapeParams { vars, map }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients in store order; zeros for parameters off the loss path.
    pub fn grads<S: Real>(&self, tape: &Tape<S>) -> Vec<Vec<S>> {
        self.vars
            .iter()
            .map(|&v| {
                tape.grad(v)
                    .map(<[S]>::to_vec)
                    .unwrap_or_else(|| vec![S::zero(); tape.value(v).numel()])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ordering_is_insertion_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f32>::new();
        store.add_linear("b", 4, 4, &mut rng);
        store.add_linear("a", 4, 4, &mut rng);
        let names: Vec<&str> = store.iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["b.w", "b.b", "a.w", "a.b"]);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicates_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.add("x", Tensor::zeros(vec![1]));
        store.add("x", Tensor::zeros(vec![1]));
    }

    #[test]
    fn cast_roundtrip_preserves_f32_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f32>::new();
        store.add_linear("l", 3, 5, &mut rng);
        let as64: ParamStore<f64> = store.cast();
        let back: ParamStore<f32> = as64.cast();
        for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
            assert_eq!(a.data, b.data);
        }
    }
}
