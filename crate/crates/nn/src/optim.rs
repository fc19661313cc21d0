use crate::{NnError, ParamStore, Real};

/// AdamW with bias correction. Defaults follow the training recipe used
/// throughout this workspace: beta1 0.9, beta2 0.999, eps 1e-8, and no
/// weight decay.
pub struct AdamW<S: Real> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Real> AdamW<S> {
    pub fn new(lr: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment access for checkpointing; empty until the first step.
    pub fn moments(&self) -> (&[Vec<S>], &[Vec<S>]) {
        (&self.m, &self.v)
    }

    pub fn restore(&mut self, step: u64, m: Vec<Vec<S>>, v: Vec<Vec<S>>) {
        self.step = step;
        self.m = m;
        self.v = v;
    }

    /// One update over every parameter. Rejects non-finite gradients before
    /// touching any state, so a failed step leaves parameters untouched.
    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &[Vec<S>]) -> Result<(), NnError> {
        assert_eq!(params.len(), grads.len(), "gradient count mismatch");
        for (i, g) in grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGrad {
                    name: params.name_at(i).to_string(),
                    step: self.step + 1,
                });
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![S::zero(); g.len()]).collect();
            self.v = grads.iter().map(|g| vec![S::zero(); g.len()]).collect();
        }
        self.step += 1;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one = S::one();
        let bc1 = S::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = S::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let lr = S::from_f64(self.lr);
        let eps = S::from_f64(self.eps);
        let wd = S::from_f64(self.weight_decay);

        for (i, g) in grads.iter().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = &mut params.tensor_at_mut(i).data;
            for k in 0..g.len() {
                m[k] = b1 * m[k] + (one - b1) * g[k];
                v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] = p[k] - lr * (mhat / (vhat.sqrt() + eps) + wd * p[k]);
            }
        }
        Ok(())
    }
}

/// Exponential moving average over a parameter set:
/// `shadow <- decay * shadow + (1 - decay) * params`.
pub struct Ema<S: Real> {
    pub decay: f64,
    shadow: ParamStore<S>,
}

impl<S: Real> Ema<S> {
    pub fn new(params: &ParamStore<S>, decay: f64) -> Self {
        Ema {
            decay,
            shadow: params.clone(),
        }
    }

    pub fn from_shadow(shadow: ParamStore<S>, decay: f64) -> Self {
        Ema { decay, shadow }
    }

    pub fn update(&mut self, params: &ParamStore<S>) {
        let d = S::from_f64(self.decay);
        let one_minus = S::from_f64(1.0 - self.decay);
        for (i, tensor) in params.tensors().iter().enumerate() {
            let s = &mut self.shadow.tensor_at_mut(i).data;
            for (sv, &pv) in s.iter_mut().zip(&tensor.data) {
                *sv = d * *sv + one_minus * pv;
            }
        }
    }

    pub fn shadow(&self) -> &ParamStore<S> {
        &self.shadow
    }
}
