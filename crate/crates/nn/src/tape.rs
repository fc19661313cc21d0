use crate::{NnError, Real, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op<S: Real> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// a * x + b with scalar constants (b only participates in the forward).
    Affine {
        x: Var,
        a: S,
        #[allow(dead_code)]
        b: S,
    },
    Exp(Var),
    Silu(Var),
    Gelu(Var),
    /// x[.., D] + bias[D]
    AddBias {
        x: Var,
        bias: Var,
    },
    /// x[.., D] * scale[D]
    MulBias {
        x: Var,
        scale: Var,
    },
    /// x[.., K] @ w[K, N]
    MatMul {
        x: Var,
        w: Var,
    },
    /// a[G, M, K] @ b[G, K, N]
    BmmNn {
        a: Var,
        b: Var,
    },
    /// a[G, M, K] @ b[G, N, K]^T
    BmmNt {
        a: Var,
        b: Var,
    },
    /// [A, B, C, D] -> [A, C, B, D]
    Permute0213(Var),
    Reshape(Var),
    SoftmaxLast(Var),
    LayerNormLast {
        x: Var,
        eps: f64,
    },
    /// table[V, D] gathered by row ids.
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    SumAll(Var),
    SumLast(Var),
    /// [B, N, D] -> [B, D]
    SumMid(Var),
    /// [B, D] -> [B, N, D]
    BroadcastMid {
        x: Var,
        n: usize,
    },
    ConcatLast(Var, Var),
    /// Per-group masked mean cross-entropy over rows of logits[R, V],
    /// R = groups * rows_per_group. Output shape [groups].
    CrossEntropyRows {
        logits: Var,
        targets: Vec<usize>,
        row_mask: Vec<bool>,
        rows_per_group: usize,
        inv_n: Vec<S>,
    },
}

struct Node<S: Real> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Define-by-run reverse-mode tape. Build the forward graph with the op
/// methods, call [`Tape::backward`] on a scalar, then read gradients back
/// with [`Tape::grad`].
pub struct Tape<S: Real> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Differentiable leaf (parameter).
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf (input or constant).
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let data = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        let needs = self.wants(a) || self.wants(b);
        self.push(data, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let data = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        let needs = self.wants(a) || self.wants(b);
        self.push(data, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let data = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        let needs = self.wants(a) || self.wants(b);
        self.push(data, Op::Mul(a, b), needs)
    }

    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let (a, b) = (S::from_f64(a), S::from_f64(b));
        let value = map(&self.nodes[x.0].value, |v| a * v + b);
        let needs = self.wants(x);
        self.push(value, Op::Affine { x, a, b }, needs)
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.affine(x, a, 0.0)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = map(&self.nodes[x.0].value, |v| v.exp());
        let needs = self.wants(x);
        self.push(value, Op::Exp(x), needs)
    }

    /// Swish activation: x * sigmoid(x).
    pub fn silu(&mut self, x: Var) -> Var {
        let value = map(&self.nodes[x.0].value, |v| v * sigmoid(v));
        let needs = self.wants(x);
        self.push(value, Op::Silu(x), needs)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = map(&self.nodes[x.0].value, gelu_val);
        let needs = self.wants(x);
        self.push(value, Op::Gelu(x), needs)
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let d = self.nodes[bias.0].value.numel();
        assert_eq!(self.nodes[x.0].value.last_dim(), d, "add_bias dim mismatch");
        let xv = &self.nodes[x.0].value;
        let bv = &self.nodes[bias.0].value;
        let mut data = xv.data.clone();
        for (i, v) in data.iter_mut().enumerate() {
            *v = *v + bv.data[i % d];
        }
        let value = Tensor::new(xv.shape.clone(), data);
        let needs = self.wants(x) || self.wants(bias);
        self.push(value, Op::AddBias { x, bias }, needs)
    }

    pub fn mul_bias(&mut self, x: Var, scale: Var) -> Var {
        let d = self.nodes[scale.0].value.numel();
        assert_eq!(self.nodes[x.0].value.last_dim(), d, "mul_bias dim mismatch");
        let xv = &self.nodes[x.0].value;
        let sv = &self.nodes[scale.0].value;
        let mut data = xv.data.clone();
        for (i, v) in data.iter_mut().enumerate() {
            *v = *v * sv.data[i % d];
        }
        let value = Tensor::new(xv.shape.clone(), data);
        let needs = self.wants(x) || self.wants(scale);
        self.push(value, Op::MulBias { x, scale }, needs)
    }

    /// x[.., K] @ w[K, N]; leading dims of x are flattened row-wise.
    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        assert_eq!(wv.shape.len(), 2, "matmul weight must be 2-D");
        let k = wv.shape[0];
        let n = wv.shape[1];
        assert_eq!(xv.last_dim(), k, "matmul inner dim mismatch");
        let rows = xv.numel() / k;
        let mut out = vec![S::zero(); rows * n];
        mm_ikj(&xv.data, &wv.data, &mut out, rows, k, n);
        let mut shape = xv.shape.clone();
        *shape.last_mut().unwrap() = n;
        let needs = self.wants(x) || self.wants(w);
        self.push(Tensor::new(shape, out), Op::MatMul { x, w }, needs)
    }

    pub fn bmm_nn(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let (g, m, k) = dims3(av);
        let (gb, kb, n) = dims3(bv);
        assert_eq!((g, k), (gb, kb), "bmm_nn shape mismatch");
        let mut out = vec![S::zero(); g * m * n];
        for gi in 0..g {
            mm_ikj(
                &av.data[gi * m * k..(gi + 1) * m * k],
                &bv.data[gi * k * n..(gi + 1) * k * n],
                &mut out[gi * m * n..(gi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let needs = self.wants(a) || self.wants(b);
        self.push(Tensor::new(vec![g, m, n], out), Op::BmmNn { a, b }, needs)
    }

    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let (g, m, k) = dims3(av);
        let (gb, n, kb) = dims3(bv);
        assert_eq!((g, k), (gb, kb), "bmm_nt shape mismatch");
        let mut out = vec![S::zero(); g * m * n];
        for gi in 0..g {
            let abase = gi * m * k;
            let bbase = gi * n * k;
            let obase = gi * m * n;
            for mi in 0..m {
                for ni in 0..n {
                    let mut acc = S::zero();
                    for ki in 0..k {
                        acc = acc + av.data[abase + mi * k + ki] * bv.data[bbase + ni * k + ki];
                    }
                    out[obase + mi * n + ni] = acc;
                }
            }
        }
        let needs = self.wants(a) || self.wants(b);
        self.push(Tensor::new(vec![g, m, n], out), Op::BmmNt { a, b }, needs)
    }

    pub fn permute_0213(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.shape.len(), 4, "permute_0213 needs rank 4");
        let (a, b, c, d) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
        let out = permute_0213_data(&xv.data, a, b, c, d);
        let needs = self.wants(x);
        self.push(Tensor::new(vec![a, c, b, d], out), Op::Permute0213(x), needs)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(
            xv.numel(),
            shape.iter().product::<usize>(),
            "reshape numel mismatch"
        );
        let value = Tensor::new(shape, xv.data.clone());
        let needs = self.wants(x);
        self.push(value, Op::Reshape(x), needs)
    }

    pub fn softmax_last(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let d = xv.last_dim();
        let mut data = xv.data.clone();
        for row in data.chunks_mut(d) {
            let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        let value = Tensor::new(xv.shape.clone(), data);
        let needs = self.wants(x);
        self.push(value, Op::SoftmaxLast(x), needs)
    }

    /// Layer norm over the trailing dimension, no affine parameters.
    pub fn layer_norm_last(&mut self, x: Var, eps: f64) -> Var {
        let xv = &self.nodes[x.0].value;
        let d = xv.last_dim();
        let dn = S::from_f64(d as f64);
        let epss = S::from_f64(eps);
        let mut data = xv.data.clone();
        for row in data.chunks_mut(d) {
            let mean = row.iter().fold(S::zero(), |a, &b| a + b) / dn;
            let var = row
                .iter()
                .fold(S::zero(), |a, &b| a + (b - mean) * (b - mean))
                / dn;
            let inv = (var + epss).sqrt().recip();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
        let value = Tensor::new(xv.shape.clone(), data);
        let needs = self.wants(x);
        self.push(value, Op::LayerNormLast { x, eps }, needs)
    }

    /// Gather rows of `table` by id; output shape `ids_shape x [D]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], ids_shape: &[usize]) -> Var {
        let tv = &self.nodes[table.0].value;
        assert_eq!(tv.shape.len(), 2, "embedding table must be 2-D");
        let (v, d) = (tv.shape[0], tv.shape[1]);
        assert_eq!(ids.len(), ids_shape.iter().product::<usize>());
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < v, "embedding id {id} out of range {v}");
            out.extend_from_slice(&tv.data[id * d..(id + 1) * d]);
        }
        let mut shape = ids_shape.to_vec();
        shape.push(d);
        let needs = self.wants(table);
        self.push(
            Tensor::new(shape, out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            needs,
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let total = self.nodes[x.0]
            .value
            .data
            .iter()
            .fold(S::zero(), |a, &b| a + b);
        let needs = self.wants(x);
        self.push(Tensor::scalar(total), Op::SumAll(x), needs)
    }

    pub fn sum_last(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let d = xv.last_dim();
        let rows = xv.numel() / d;
        let mut out = Vec::with_capacity(rows);
        for row in xv.data.chunks(d) {
            out.push(row.iter().fold(S::zero(), |a, &b| a + b));
        }
        let mut shape = xv.shape.clone();
        shape.pop();
        if shape.is_empty() {
            shape.push(1);
        }
        let needs = self.wants(x);
        self.push(Tensor::new(shape, out), Op::SumLast(x), needs)
    }

    /// [B, N, D] -> [B, D]
    pub fn sum_mid(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (b, n, d) = dims3(xv);
        let mut out = vec![S::zero(); b * d];
        for bi in 0..b {
            for ni in 0..n {
                let base = (bi * n + ni) * d;
                for di in 0..d {
                    out[bi * d + di] = out[bi * d + di] + xv.data[base + di];
                }
            }
        }
        let needs = self.wants(x);
        self.push(Tensor::new(vec![b, d], out), Op::SumMid(x), needs)
    }

    /// [B, D] -> [B, N, D]
    pub fn broadcast_mid(&mut self, x: Var, n: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.shape.len(), 2, "broadcast_mid needs rank 2");
        let (b, d) = (xv.shape[0], xv.shape[1]);
        let mut out = Vec::with_capacity(b * n * d);
        for bi in 0..b {
            for _ in 0..n {
                out.extend_from_slice(&xv.data[bi * d..(bi + 1) * d]);
            }
        }
        let needs = self.wants(x);
        self.push(
            Tensor::new(vec![b, n, d], out),
            Op::BroadcastMid { x, n },
            needs,
        )
    }

    pub fn concat_last(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let da = av.last_dim();
        let db = bv.last_dim();
        assert_eq!(
            av.shape[..av.shape.len() - 1],
            bv.shape[..bv.shape.len() - 1],
            "concat_last leading dims mismatch"
        );
        let rows = av.numel() / da;
        let mut out = Vec::with_capacity(rows * (da + db));
        for r in 0..rows {
            out.extend_from_slice(&av.data[r * da..(r + 1) * da]);
            out.extend_from_slice(&bv.data[r * db..(r + 1) * db]);
        }
        let mut shape = av.shape.clone();
        *shape.last_mut().unwrap() = da + db;
        let needs = self.wants(a) || self.wants(b);
        self.push(Tensor::new(shape, out), Op::ConcatLast(a, b), needs)
    }

    /// Masked mean cross-entropy per group: logits[R, V] with
    /// R = groups * rows_per_group; output [groups] where entry g is
    /// `inv_n[g] * sum over masked rows of -log softmax(logits)[target]`.
    pub fn cross_entropy_rows(
        &mut self,
        logits: Var,
        targets: &[usize],
        row_mask: &[bool],
        rows_per_group: usize,
        inv_n: &[f64],
    ) -> Var {
        let lv = &self.nodes[logits.0].value;
        let v = lv.last_dim();
        let rows = lv.numel() / v;
        assert_eq!(rows, targets.len());
        assert_eq!(rows, row_mask.len());
        assert_eq!(rows % rows_per_group, 0);
        let groups = rows / rows_per_group;
        assert_eq!(groups, inv_n.len());
        let mut out = vec![S::zero(); groups];
        for r in 0..rows {
            if !row_mask[r] {
                continue;
            }
            let row = &lv.data[r * v..(r + 1) * v];
            let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
            let lse = row
                .iter()
                .fold(S::zero(), |a, &b| a + (b - max).exp())
                .ln()
                + max;
            let g = r / rows_per_group;
            out[g] = out[g] + S::from_f64(inv_n[g]) * (lse - row[targets[r]]);
        }
        let needs = self.wants(logits);
        self.push(
            Tensor::new(vec![groups], out),
            Op::CrossEntropyRows {
                logits,
                targets: targets.to_vec(),
                row_mask: row_mask.to_vec(),
                rows_per_group,
                inv_n: inv_n.iter().map(|&x| S::from_f64(x)).collect(),
            },
            needs,
        )
    }

    /// Reverse pass from a scalar output. Gradients accumulate for every
    /// node with `needs_grad` on the path.
    pub fn backward(&mut self, output: Var) -> Result<(), NnError> {
        let out_node = &self.nodes[output.0].value;
        if out_node.numel() != 1 {
            return Err(NnError::Shape {
                reason: format!("backward needs a scalar, got shape {:?}", out_node.shape),
            });
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(vec![S::one()]);

        for idx in (0..=output.0).rev() {
            let Some(gout) = self.grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].needs_grad {
                self.grads[idx] = Some(gout);
                continue;
            }
            self.apply_backward(idx, &gout);
            self.grads[idx] = Some(gout);
        }
        Ok(())
    }

    /// Gradient of the last `backward` output with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn accumulate(&mut self, v: Var, contrib: Vec<S>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e = *e + c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn apply_backward(&mut self, idx: usize, gout: &[S]) {
        // The ops borrow value data immutably; contributions are built first
        // and accumulated after to satisfy the borrow checker.
        enum Pending<S> {
            One(Var, Vec<S>),
            Two(Var, Vec<S>, Var, Vec<S>),
            None,
        }
        let pending = match &self.nodes[idx].op {
            Op::Leaf => Pending::None,
            Op::Add(a, b) => Pending::Two(*a, gout.to_vec(), *b, gout.to_vec()),
            Op::Sub(a, b) => {
                let neg: Vec<S> = gout.iter().map(|&g| -g).collect();
                Pending::Two(*a, gout.to_vec(), *b, neg)
            }
            Op::Mul(a, b) => {
                let av = &self.nodes[a.0].value.data;
                let bv = &self.nodes[b.0].value.data;
                let ga: Vec<S> = gout.iter().zip(bv).map(|(&g, &y)| g * y).collect();
                let gb: Vec<S> = gout.iter().zip(av).map(|(&g, &x)| g * x).collect();
                Pending::Two(*a, ga, *b, gb)
            }
            Op::Affine { x, a, .. } => {
                let a = *a;
                Pending::One(*x, gout.iter().map(|&g| g * a).collect())
            }
            Op::Exp(x) => {
                let yv = &self.nodes[idx].value.data;
                Pending::One(*x, gout.iter().zip(yv).map(|(&g, &y)| g * y).collect())
            }
            Op::Silu(x) => {
                let xv = &self.nodes[x.0].value.data;
                let gx: Vec<S> = gout
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| {
                        let s = sigmoid(v);
                        g * (s + v * s * (S::one() - s))
                    })
                    .collect();
                Pending::One(*x, gx)
            }
            Op::Gelu(x) => {
                let xv = &self.nodes[x.0].value.data;
                let gx: Vec<S> = gout
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| g * gelu_grad(v))
                    .collect();
                Pending::One(*x, gx)
            }
            Op::AddBias { x, bias } => {
                let d = self.nodes[bias.0].value.numel();
                let mut gb = vec![S::zero(); d];
                for (i, &g) in gout.iter().enumerate() {
                    gb[i % d] = gb[i % d] + g;
                }
                Pending::Two(*x, gout.to_vec(), *bias, gb)
            }
            Op::MulBias { x, scale } => {
                let d = self.nodes[scale.0].value.numel();
                let xv = &self.nodes[x.0].value.data;
                let sv = &self.nodes[scale.0].value.data;
                let mut gs = vec![S::zero(); d];
                let mut gx = vec![S::zero(); xv.len()];
                for (i, &g) in gout.iter().enumerate() {
                    gx[i] = g * sv[i % d];
                    gs[i % d] = gs[i % d] + g * xv[i];
                }
                Pending::Two(*x, gx, *scale, gs)
            }
            Op::MatMul { x, w } => {
                let xv = &self.nodes[x.0].value;
                let wv = &self.nodes[w.0].value;
                let k = wv.shape[0];
                let n = wv.shape[1];
                let rows = xv.numel() / k;
                // dX = dY @ W^T
                let mut gx = vec![S::zero(); rows * k];
                for r in 0..rows {
                    for ni in 0..n {
                        let g = gout[r * n + ni];
                        if g != S::zero() {
                            for ki in 0..k {
                                gx[r * k + ki] = gx[r * k + ki] + g * wv.data[ki * n + ni];
                            }
                        }
                    }
                }
                // dW = X^T @ dY
                let mut gw = vec![S::zero(); k * n];
                for r in 0..rows {
                    for ki in 0..k {
                        let xval = xv.data[r * k + ki];
                        if xval != S::zero() {
                            for ni in 0..n {
                                gw[ki * n + ni] = gw[ki * n + ni] + xval * gout[r * n + ni];
                            }
                        }
                    }
                }
                Pending::Two(*x, gx, *w, gw)
            }
            Op::BmmNn { a, b } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (g, m, k) = dims3(av);
                let n = bv.shape[2];
                let mut ga = vec![S::zero(); av.numel()];
                let mut gb = vec![S::zero(); bv.numel()];
                for gi in 0..g {
                    let (ab, bb, ob) = (gi * m * k, gi * k * n, gi * m * n);
                    // dA = dY @ B^T
                    for mi in 0..m {
                        for ni in 0..n {
                            let gy = gout[ob + mi * n + ni];
                            for ki in 0..k {
                                ga[ab + mi * k + ki] =
                                    ga[ab + mi * k + ki] + gy * bv.data[bb + ki * n + ni];
                            }
                        }
                    }
                    // dB = A^T @ dY
                    for mi in 0..m {
                        for ki in 0..k {
                            let xval = av.data[ab + mi * k + ki];
                            for ni in 0..n {
                                gb[bb + ki * n + ni] =
                                    gb[bb + ki * n + ni] + xval * gout[ob + mi * n + ni];
                            }
                        }
                    }
                }
                Pending::Two(*a, ga, *b, gb)
            }
            Op::BmmNt { a, b } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (g, m, k) = dims3(av);
                let n = bv.shape[1];
                let mut ga = vec![S::zero(); av.numel()];
                let mut gb = vec![S::zero(); bv.numel()];
                for gi in 0..g {
                    let (ab, bb, ob) = (gi * m * k, gi * n * k, gi * m * n);
                    for mi in 0..m {
                        for ni in 0..n {
                            let gy = gout[ob + mi * n + ni];
                            if gy != S::zero() {
                                for ki in 0..k {
                                    ga[ab + mi * k + ki] =
                                        ga[ab + mi * k + ki] + gy * bv.data[bb + ni * k + ki];
                                    gb[bb + ni * k + ki] =
                                        gb[bb + ni * k + ki] + gy * av.data[ab + mi * k + ki];
                                }
                            }
                        }
                    }
                }
                Pending::Two(*a, ga, *b, gb)
            }
            Op::Permute0213(x) => {
                let yshape = &self.nodes[idx].value.shape;
                let (a, c, b, d) = (yshape[0], yshape[1], yshape[2], yshape[3]);
                // The inverse of swapping axes 1 and 2 is the same swap.
                Pending::One(*x, permute_0213_data(gout, a, c, b, d))
            }
            Op::Reshape(x) => Pending::One(*x, gout.to_vec()),
            Op::SoftmaxLast(x) => {
                let yv = &self.nodes[idx].value;
                let d = yv.last_dim();
                let mut gx = vec![S::zero(); yv.numel()];
                for (row, (ys, gs)) in yv.data.chunks(d).zip(gout.chunks(d)).enumerate() {
                    let dot = ys
                        .iter()
                        .zip(gs)
                        .fold(S::zero(), |acc, (&y, &g)| acc + y * g);
                    for (i, (&y, &g)) in ys.iter().zip(gs).enumerate() {
                        gx[row * d + i] = y * (g - dot);
                    }
                }
                Pending::One(*x, gx)
            }
            Op::LayerNormLast { x, eps } => {
                let xv = &self.nodes[x.0].value;
                let d = xv.last_dim();
                let dn = S::from_f64(d as f64);
                let epss = S::from_f64(*eps);
                let mut gx = vec![S::zero(); xv.numel()];
                for (row, (xs, gs)) in xv.data.chunks(d).zip(gout.chunks(d)).enumerate() {
                    let mean = xs.iter().fold(S::zero(), |a, &b| a + b) / dn;
                    let var = xs
                        .iter()
                        .fold(S::zero(), |a, &b| a + (b - mean) * (b - mean))
                        / dn;
                    let inv = (var + epss).sqrt().recip();
                    let mut gmean = S::zero();
                    let mut gdot = S::zero();
                    for (&xi, &gi) in xs.iter().zip(gs) {
                        gmean = gmean + gi;
                        gdot = gdot + gi * (xi - mean) * inv;
                    }
                    gmean = gmean / dn;
                    gdot = gdot / dn;
                    for (i, (&xi, &gi)) in xs.iter().zip(gs).enumerate() {
                        let xhat = (xi - mean) * inv;
                        gx[row * d + i] = inv * (gi - gmean - xhat * gdot);
                    }
                }
                Pending::One(*x, gx)
            }
            Op::Embedding { table, ids } => {
                let tv = &self.nodes[table.0].value;
                let d = tv.shape[1];
                let mut gt = vec![S::zero(); tv.numel()];
                for (r, &id) in ids.iter().enumerate() {
                    for di in 0..d {
                        gt[id * d + di] = gt[id * d + di] + gout[r * d + di];
                    }
                }
                Pending::One(*table, gt)
            }
            Op::SumAll(x) => {
                let n = self.nodes[x.0].value.numel();
                Pending::One(*x, vec![gout[0]; n])
            }
            Op::SumLast(x) => {
                let xv = &self.nodes[x.0].value;
                let d = xv.last_dim();
                let mut gx = Vec::with_capacity(xv.numel());
                for &g in gout {
                    gx.extend(std::iter::repeat_n(g, d));
                }
                Pending::One(*x, gx)
            }
            Op::SumMid(x) => {
                let xv = &self.nodes[x.0].value;
                let (b, n, d) = dims3(xv);
                let mut gx = Vec::with_capacity(b * n * d);
                for bi in 0..b {
                    for _ in 0..n {
                        gx.extend_from_slice(&gout[bi * d..(bi + 1) * d]);
                    }
                }
                Pending::One(*x, gx)
            }
            Op::BroadcastMid { x, n } => {
                let xv = &self.nodes[x.0].value;
                let (b, d) = (xv.shape[0], xv.shape[1]);
                let mut gx = vec![S::zero(); b * d];
                for bi in 0..b {
                    for ni in 0..*n {
                        let base = (bi * n + ni) * d;
                        for di in 0..d {
                            gx[bi * d + di] = gx[bi * d + di] + gout[base + di];
                        }
                    }
                }
                Pending::One(*x, gx)
            }
            Op::ConcatLast(a, b) => {
                let da = self.nodes[a.0].value.last_dim();
                let db = self.nodes[b.0].value.last_dim();
                let rows = self.nodes[a.0].value.numel() / da;
                let mut ga = Vec::with_capacity(rows * da);
                let mut gb = Vec::with_capacity(rows * db);
                for r in 0..rows {
                    let base = r * (da + db);
                    ga.extend_from_slice(&gout[base..base + da]);
                    gb.extend_from_slice(&gout[base + da..base + da + db]);
                }
                Pending::Two(*a, ga, *b, gb)
            }
            Op::CrossEntropyRows {
                logits,
                targets,
                row_mask,
                rows_per_group,
                inv_n,
            } => {
                let lv = &self.nodes[logits.0].value;
                let v = lv.last_dim();
                let rows = lv.numel() / v;
                let mut gl = vec![S::zero(); lv.numel()];
                for r in 0..rows {
                    if !row_mask[r] {
                        continue;
                    }
                    let g = r / rows_per_group;
                    let coeff = gout[g] * inv_n[g];
                    let row = &lv.data[r * v..(r + 1) * v];
                    let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
                    let mut sum = S::zero();
                    for &x in row {
                        sum = sum + (x - max).exp();
                    }
                    for (vi, &x) in row.iter().enumerate() {
                        let p = (x - max).exp() / sum;
                        let indicator = if vi == targets[r] { S::one() } else { S::zero() };
                        gl[r * v + vi] = coeff * (p - indicator);
                    }
                }
                Pending::One(*logits, gl)
            }
        };
        match pending {
            Pending::None => {}
            Pending::One(a, ga) => self.accumulate(a, ga),
            Pending::Two(a, ga, b, gb) => {
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
        }
    }
}

/// Row-major C[m, n] += A[m, k] @ B[k, n] with the k loop in the middle so
/// both B and C stream sequentially.
fn mm_ikj<S: Real>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for mi in 0..m {
        for ki in 0..k {
            let av = a[mi * k + ki];
            if av == S::zero() {
                continue;
            }
            let brow = &b[ki * n..(ki + 1) * n];
            let crow = &mut c[mi * n..(mi + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

fn dims3<S: Real>(t: &Tensor<S>) -> (usize, usize, usize) {
    assert_eq!(t.shape.len(), 3, "expected rank-3 tensor, got {:?}", t.shape);
    (t.shape[0], t.shape[1], t.shape[2])
}

fn map<S: Real>(t: &Tensor<S>, f: impl Fn(S) -> S) -> Tensor<S> {
    Tensor::new(t.shape.clone(), t.data.iter().map(|&v| f(v)).collect())
}

fn zip_map<S: Real>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    Tensor::new(
        a.shape.clone(),
        a.data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

fn sigmoid<S: Real>(x: S) -> S {
    (S::one() + (-x).exp()).recip()
}

fn gelu_val<S: Real>(x: S) -> S {
    let c = S::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    half * x * (S::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<S: Real>(x: S) -> S {
    let c = S::from_f64(0.797_884_560_802_865_4);
    let k = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    let three = S::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (S::one() + three * k * x * x);
    half * (S::one() + t) + half * x * (S::one() - t * t) * du
}

/// For y[a', c', b', d'] = x[a', b', c', d'] with axes 1 and 2 swapped.
fn permute_0213_data<S: Real>(data: &[S], a: usize, b: usize, c: usize, d: usize) -> Vec<S> {
    let mut out = vec![S::zero(); data.len()];
    for ai in 0..a {
        for bi in 0..b {
            for ci in 0..c {
                let src = (((ai * b) + bi) * c + ci) * d;
                let dst = (((ai * c) + ci) * b + bi) * d;
                out[dst..dst + d].copy_from_slice(&data[src..src + d]);
            }
        }
    }
    out
}
