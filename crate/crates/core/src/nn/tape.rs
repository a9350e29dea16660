//! Reverse-mode automatic differentiation over a fixed op set.
//!
//! A `Tape` is an append-only graph of tensor values; every op records a
//! backward closure that scatters the upstream gradient into its parents.
//! Parents always precede children, so a single reverse sweep from the loss
//! node is a valid topological order.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::csr::Csr;
use super::tensor::{Tensor, TensorError};

/// Handle to a node on a `Tape`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

impl Var {
    /// Index into the gradient store returned by `Tape::backward`.
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Per-node gradients produced by `Tape::backward`. Indexed by `Var`.
pub type Grads = Vec<Option<Vec<f32>>>;

pub(crate) type BackFn = Box<dyn Fn(&[f32], &[Tensor], &mut Grads)>;

#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    backs: Vec<Option<BackFn>>,
}

/// Gradient slot for node `id`, created zeroed on demand.
pub(crate) fn slot(grads: &mut Grads, id: usize, len: usize) -> &mut [f32] {
    grads[id].get_or_insert_with(|| vec![0.0; len]).as_mut_slice()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    fn push(&mut self, value: Tensor, back: Option<BackFn>) -> Var {
        self.values.push(value);
        self.backs.push(back);
        Var(self.values.len() - 1)
    }

    /// Appends an op node; for ops defined in sibling modules.
    pub(crate) fn push_node(&mut self, value: Tensor, back: BackFn) -> Var {
        self.push(value, Some(back))
    }

    /// Insert an input node. Leaves keep their gradient after `backward`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, None)
    }

    /// Reverse sweep from a scalar loss. Returns per-node gradients; interior
    /// node gradients are dropped once consumed, leaf gradients are retained.
    pub fn backward(&self, loss: Var) -> Result<Grads, TensorError> {
        let lt = &self.values[loss.0];
        if !lt.is_scalar() {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                left: lt.shape().to_vec(),
                right: vec![1],
            });
        }
        let mut grads: Grads = vec![None; self.values.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.backs[id] {
                Some(back) => back(&g, &self.values, &mut grads),
                None => grads[id] = Some(g), // leaf: keep
            }
        }
        Ok(grads)
    }

    // ---- linear algebra ----------------------------------------------------

    pub fn try_matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        let back: BackFn = Box::new(move |dy, values, grads| {
            let (va, vb) = (&values[a.0], &values[b.0]);
            // dA += dY * B^T
            {
                let ga = slot(grads, a.0, m * k);
                for i in 0..m {
                    for j in 0..k {
                        let mut acc = 0.0;
                        let dyr = &dy[i * n..(i + 1) * n];
                        let br = vb.data();
                        for (p, &d) in dyr.iter().enumerate() {
                            acc += d * br[j * n + p];
                        }
                        ga[i * k + j] += acc;
                    }
                }
            }
            // dB += A^T * dY
            {
                let gb = slot(grads, b.0, k * n);
                let ad = va.data();
                for i in 0..m {
                    let dyr = &dy[i * n..(i + 1) * n];
                    for j in 0..k {
                        let av = ad[i * k + j];
                        if av == 0.0 {
                            continue;
                        }
                        let gbr = &mut gb[j * n..(j + 1) * n];
                        for (p, &d) in dyr.iter().enumerate() {
                            gbr[p] += av * d;
                        }
                    }
                }
            }
        });
        Ok(self.push(Tensor::new(vec![m, n], out).unwrap(), Some(back)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.try_matmul(a, b).expect("matmul shape mismatch")
    }

    /// y = adj * x for CSR `adj` [r×c] and dense x [c×d].
    pub fn try_spmm(&mut self, adj: &Arc<Csr>, x: Var) -> Result<Var, TensorError> {
        let tx = &self.values[x.0];
        let (n, d) = (tx.rows(), tx.cols());
        if adj.n_cols != n {
            return Err(TensorError::ShapeMismatch {
                op: "spmm",
                left: vec![adj.n_rows, adj.n_cols],
                right: tx.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; adj.n_rows * d];
        adj.matmul_dense(tx.data(), d, &mut out);
        let out_rows = adj.n_rows;
        let adj = Arc::clone(adj);
        let back: BackFn = Box::new(move |dy, _values, grads| {
            // dX = adj^T * dY
            let adj_t = adj.transpose();
            let gx = slot(grads, x.0, n * d);
            let mut tmp = vec![0.0; n * d];
            adj_t.matmul_dense(dy, d, &mut tmp);
            for (g, t) in gx.iter_mut().zip(&tmp) {
                *g += t;
            }
        });
        Ok(self.push(Tensor::new(vec![out_rows, d], out).unwrap(), Some(back)))
    }

    pub fn spmm(&mut self, adj: &Arc<Csr>, x: Var) -> Var {
        self.try_spmm(adj, x).expect("spmm dimension mismatch")
    }

    // ---- elementwise -------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let out: Vec<f32> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let len = out.len();
        let back: BackFn = Box::new(move |dy, _values, grads| {
            for id in [a.0, b.0] {
                let g = slot(grads, id, len);
                for (gi, &d) in g.iter_mut().zip(dy) {
                    *gi += d;
                }
            }
        });
        self.push(Tensor::new(shape, out).unwrap(), Some(back))
    }

    /// x [n×d] + row-broadcast bias [d].
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (tx, tb) = (&self.values[x.0], &self.values[bias.0]);
        let (n, d) = (tx.rows(), tx.cols());
        assert_eq!(tb.len(), d, "bias length mismatch");
        let mut out = tx.data().to_vec();
        for r in 0..n {
            for (o, &b) in out[r * d..(r + 1) * d].iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let shape = tx.shape().to_vec();
        let back: BackFn = Box::new(move |dy, _values, grads| {
            {
                let gx = slot(grads, x.0, n * d);
                for (g, &dv) in gx.iter_mut().zip(dy) {
                    *g += dv;
                }
            }
            let gb = slot(grads, bias.0, d);
            for r in 0..n {
                for (g, &dv) in gb.iter_mut().zip(&dy[r * d..(r + 1) * d]) {
                    *g += dv;
                }
            }
        });
        self.push(Tensor::new(shape, out).unwrap(), Some(back))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let out: Vec<f32> = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let shape = ta.shape().to_vec();
        let len = out.len();
        let back: BackFn = Box::new(move |dy, values, grads| {
            {
                let vb = values[b.0].data().to_vec();
                let ga = slot(grads, a.0, len);
                for ((g, &d), v) in ga.iter_mut().zip(dy).zip(vb) {
                    *g += d * v;
                }
            }
            let va = values[a.0].data().to_vec();
            let gb = slot(grads, b.0, len);
            for ((g, &d), v) in gb.iter_mut().zip(dy).zip(va) {
                *g += d * v;
            }
        });
        self.push(Tensor::new(shape, out).unwrap(), Some(back))
    }

    pub fn scale(&mut self, x: Var, k: f32) -> Var {
        let tx = &self.values[x.0];
        let out: Vec<f32> = tx.data().iter().map(|&v| v * k).collect();
        let shape = tx.shape().to_vec();
        let len = out.len();
        let back: BackFn = Box::new(move |dy, _values, grads| {
            let g = slot(grads, x.0, len);
            for (gi, &d) in g.iter_mut().zip(dy) {
                *gi += k * d;
            }
        });
        self.push(Tensor::new(shape, out).unwrap(), Some(back))
    }

    // ---- reductions ---------------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let tx = &self.values[x.0];
        let s: f32 = tx.data().iter().sum();
        let len = tx.len();
        let back: BackFn = Box::new(move |dy, _values, grads| {
            let g = slot(grads, x.0, len);
            for gi in g.iter_mut() {
                *gi += dy[0];
            }
        });
        self.push(Tensor::scalar(s), Some(back))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let tx = &self.values[x.0];
        let len = tx.len();
        let s: f32 = tx.data().iter().sum::<f32>() / len as f32;
        let back: BackFn = Box::new(move |dy, _values, grads| {
            let g = slot(grads, x.0, len);
            let d = dy[0] / len as f32;
            for gi in g.iter_mut() {
                *gi += d;
            }
        });
        self.push(Tensor::scalar(s), Some(back))
    }

    // ---- activations --------------------------------------------------------

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = &self.values[x.0];
        let out: Vec<f32> = tx.data().iter().map(|&v| v.max(0.0)).collect();
        let shape = tx.shape().to_vec();
        let len = out.len();
        let back: BackFn = Box::new(move |dy, values, grads| {
            let vx = &values[x.0];
            let g = slot(grads, x.0, len);
            for ((gi, &d), &v) in g.iter_mut().zip(dy).zip(vx.data()) {
                if v > 0.0 {
                    *gi += d;
                }
            }
        });
        self.push(Tensor::new(shape, out).unwrap(), Some(back))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let tx = &self.values[x.0];
        let out: Vec<f32> = tx
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 })
            .collect();
        let shape = tx.shape().to_vec();
        let len = out.len();
        let back: BackFn = Box::new(move |dy, values, grads| {
            let vx = &values[x.0];
            let g = slot(grads, x.0, len);
            for ((gi, &d), &v) in g.iter_mut().zip(dy).zip(vx.data()) {
                let slope = if v > 0.0 { 1.0 } else { v.exp() };
                *gi += d * slope;
            }
        });
        self.push(Tensor::new(shape, out).unwrap(), Some(back))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let tx = &self.values[x.0];
        let out: Vec<f32> = tx.data().iter().map(|&v| sigmoid_f(v)).collect();
        let shape = tx.shape().to_vec();
        let saved = out.clone();
        let len = out.len();
        let back: BackFn = Box::new(move |dy, _values, grads| {
            let g = slot(grads, x.0, len);
            for ((gi, &d), &s) in g.iter_mut().zip(dy).zip(&saved) {
                *gi += d * s * (1.0 - s);
            }
        });
        self.push(Tensor::new(shape, out).unwrap(), Some(back))
    }

    /// Inverted dropout. Identity (no node) when not training or rate is 0.
    pub fn dropout(&mut self, x: Var, rate: f32, train: bool, rng: &mut ChaCha8Rng) -> Var {
        if !train || rate <= 0.0 {
            return x;
        }
        assert!(rate < 1.0, "dropout rate must be < 1");
        let tx = &self.values[x.0];
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mask: Vec<bool> = (0..tx.len()).map(|_| rng.random::<f32>() < keep).collect();
        let out: Vec<f32> = tx
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { v * scale } else { 0.0 })
            .collect();
        let shape = tx.shape().to_vec();
        let len = out.len();
        let back: BackFn = Box::new(move |dy, _values, grads| {
            let g = slot(grads, x.0, len);
            for ((gi, &d), &m) in g.iter_mut().zip(dy).zip(&mask) {
                if m {
                    *gi += d * scale;
                }
            }
        });
        self.push(Tensor::new(shape, out).unwrap(), Some(back))
    }

    // ---- gather / scatter ----------------------------------------------------

    /// Rows of x at `rows`, preserving order.
    pub fn select_rows(&mut self, x: Var, rows: Arc<Vec<u32>>) -> Var {
        let tx = &self.values[x.0];
        let (n, d) = (tx.rows(), tx.cols());
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows.iter() {
            out.extend_from_slice(&tx.data()[r as usize * d..(r as usize + 1) * d]);
        }
        let k = rows.len();
        let back: BackFn = Box::new(move |dy, _values, grads| {
            let g = slot(grads, x.0, n * d);
            for (i, &r) in rows.iter().enumerate() {
                let src = &dy[i * d..(i + 1) * d];
                let dst = &mut g[r as usize * d..(r as usize + 1) * d];
                for (gd, &s) in dst.iter_mut().zip(src) {
                    *gd += s;
                }
            }
        });
        self.push(Tensor::new(vec![k, d], out).unwrap(), Some(back))
    }

    /// Sum rows of x into `n_seg` buckets given per-row segment ids.
    pub fn segment_sum(&mut self, x: Var, seg: Arc<Vec<u32>>, n_seg: usize) -> Var {
        let tx = &self.values[x.0];
        let (n, d) = (tx.rows(), tx.cols());
        assert_eq!(seg.len(), n, "segment vector length mismatch");
        let mut out = vec![0.0; n_seg * d];
        for (i, &s) in seg.iter().enumerate() {
            let src = &tx.data()[i * d..(i + 1) * d];
            let dst = &mut out[s as usize * d..(s as usize + 1) * d];
            for (o, &v) in dst.iter_mut().zip(src) {
                *o += v;
            }
        }
        let back: BackFn = Box::new(move |dy, _values, grads| {
            let g = slot(grads, x.0, n * d);
            for (i, &s) in seg.iter().enumerate() {
                let src = &dy[s as usize * d..(s as usize + 1) * d];
                let dst = &mut g[i * d..(i + 1) * d];
                for (gd, &v) in dst.iter_mut().zip(src) {
                    *gd += v;
                }
            }
        });
        self.push(Tensor::new(vec![n_seg, d], out).unwrap(), Some(back))
    }

    /// Per-pair inner products z[u]·z[v] for an edge list.
    pub fn edge_dot(&mut self, z: Var, pairs: Arc<Vec<(u32, u32)>>) -> Var {
        let tz = &self.values[z.0];
        let (n, d) = (tz.rows(), tz.cols());
        let zd = tz.data();
        let out: Vec<f32> = pairs
            .iter()
            .map(|&(u, v)| {
                let zu = &zd[u as usize * d..(u as usize + 1) * d];
                let zv = &zd[v as usize * d..(v as usize + 1) * d];
                zu.iter().zip(zv).map(|(a, b)| a * b).sum()
            })
            .collect();
        let e = pairs.len();
        let back: BackFn = Box::new(move |dy, values, grads| {
            let zd = values[z.0].data().to_vec();
            let g = slot(grads, z.0, n * d);
            for (i, &(u, v)) in pairs.iter().enumerate() {
                let (u, v) = (u as usize, v as usize);
                let dv = dy[i];
                for j in 0..d {
                    g[u * d + j] += dv * zd[v * d + j];
                    g[v * d + j] += dv * zd[u * d + j];
                }
            }
        });
        self.push(Tensor::new(vec![e], out).unwrap(), Some(back))
    }

    // ---- losses ---------------------------------------------------------------

    /// Mean softmax cross-entropy over rows of `logits` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Arc<Vec<u32>>) -> Var {
        let tl = &self.values[logits.0];
        let (n, c) = (tl.rows(), tl.cols());
        assert_eq!(labels.len(), n, "label count mismatch");
        let mut probs = vec![0.0f32; n * c];
        let mut loss_acc = 0.0f64;
        for r in 0..n {
            let row = &tl.data()[r * c..(r + 1) * c];
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut denom = 0.0f32;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - m).exp();
                probs[r * c + j] = e;
                denom += e;
            }
            for p in &mut probs[r * c..(r + 1) * c] {
                *p /= denom;
            }
            let y = labels[r] as usize;
            debug_assert!(y < c);
            let lse = m + denom.ln();
            loss_acc += (lse - row[y]) as f64;
        }
        let loss = (loss_acc / n as f64) as f32;
        let back: BackFn = Box::new(move |dy, _values, grads| {
            let g = slot(grads, logits.0, n * c);
            let d = dy[0] / n as f32;
            for r in 0..n {
                let y = labels[r] as usize;
                for j in 0..c {
                    let onehot = if j == y { 1.0 } else { 0.0 };
                    g[r * c + j] += d * (probs[r * c + j] - onehot);
                }
            }
        });
        self.push(Tensor::scalar(loss), Some(back))
    }

    /// Mean binary cross-entropy on logits, numerically stable form.
    pub fn bce_with_logits(&mut self, scores: Var, targets: Arc<Vec<f32>>) -> Var {
        let ts = &self.values[scores.0];
        let n = ts.len();
        assert_eq!(targets.len(), n, "target count mismatch");
        let mut acc = 0.0f64;
        for (&s, &t) in ts.data().iter().zip(targets.iter()) {
            // max(s,0) - s*t + ln(1 + e^{-|s|})
            let v = s.max(0.0) - s * t + (-s.abs()).exp().ln_1p();
            acc += v as f64;
        }
        let loss = (acc / n as f64) as f32;
        let back: BackFn = Box::new(move |dy, values, grads| {
            let sd = values[scores.0].data().to_vec();
            let g = slot(grads, scores.0, n);
            let d = dy[0] / n as f32;
            for ((gi, &s), &t) in g.iter_mut().zip(&sd).zip(targets.iter()) {
                *gi += d * (sigmoid_f(s) - t);
            }
        });
        self.push(Tensor::scalar(loss), Some(back))
    }

    // ---- batch normalization ----------------------------------------------------

    /// BatchNorm over rows (feature columns normalized independently).
    /// Running statistics on `state` are updated eagerly in train mode.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState,
        train: bool,
    ) -> Var {
        let tx = &self.values[x.0];
        let (n, d) = (tx.rows(), tx.cols());
        assert_eq!(state.running_mean.len(), d);
        let (mean, var) = if train {
            let mut mean = vec![0.0f32; d];
            let mut var = vec![0.0f32; d];
            for r in 0..n {
                for (m, &v) in mean.iter_mut().zip(&tx.data()[r * d..(r + 1) * d]) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= n as f32;
            }
            for r in 0..n {
                for j in 0..d {
                    let diff = tx.data()[r * d + j] - mean[j];
                    var[j] += diff * diff;
                }
            }
            for v in &mut var {
                *v /= n as f32;
            }
            let mom = state.momentum;
            for j in 0..d {
                state.running_mean[j] = (1.0 - mom) * state.running_mean[j] + mom * mean[j];
                let unbiased = if n > 1 {
                    var[j] * n as f32 / (n as f32 - 1.0)
                } else {
                    var[j]
                };
                state.running_var[j] = (1.0 - mom) * state.running_var[j] + mom * unbiased;
            }
            (mean, var)
        } else {
            (state.running_mean.clone(), state.running_var.clone())
        };

        let eps = state.eps;
        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let g_data = self.values[gamma.0].data().to_vec();
        let b_data = self.values[beta.0].data().to_vec();
        let mut xhat = vec![0.0f32; n * d];
        let mut out = vec![0.0f32; n * d];
        {
            let xd = self.values[x.0].data();
            for r in 0..n {
                for j in 0..d {
                    let h = (xd[r * d + j] - mean[j]) * inv_std[j];
                    xhat[r * d + j] = h;
                    out[r * d + j] = g_data[j] * h + b_data[j];
                }
            }
        }
        let back: BackFn = Box::new(move |dy, _values, grads| {
            // dgamma, dbeta
            {
                let gg = slot(grads, gamma.0, d);
                for r in 0..n {
                    for j in 0..d {
                        gg[j] += dy[r * d + j] * xhat[r * d + j];
                    }
                }
            }
            {
                let gb = slot(grads, beta.0, d);
                for r in 0..n {
                    for j in 0..d {
                        gb[j] += dy[r * d + j];
                    }
                }
            }
            let gx = slot(grads, x.0, n * d);
            if train {
                // full gradient through batch statistics
                let mut mean_dy = vec![0.0f32; d];
                let mut mean_dy_xhat = vec![0.0f32; d];
                for r in 0..n {
                    for j in 0..d {
                        mean_dy[j] += dy[r * d + j];
                        mean_dy_xhat[j] += dy[r * d + j] * xhat[r * d + j];
                    }
                }
                for j in 0..d {
                    mean_dy[j] /= n as f32;
                    mean_dy_xhat[j] /= n as f32;
                }
                for r in 0..n {
                    for j in 0..d {
                        let t = dy[r * d + j] - mean_dy[j] - xhat[r * d + j] * mean_dy_xhat[j];
                        gx[r * d + j] += g_data[j] * inv_std[j] * t;
                    }
                }
            } else {
                for r in 0..n {
                    for j in 0..d {
                        gx[r * d + j] += dy[r * d + j] * g_data[j] * inv_std[j];
                    }
                }
            }
        });
        self.push(Tensor::new(vec![n, d], out).unwrap(), Some(back))
    }
}

/// Running statistics for one batch-norm site.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
}

impl BatchNormState {
    pub fn new(dim: usize) -> Self {
        Self {
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

pub(crate) fn sigmoid_f(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn matmul_raw(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}
