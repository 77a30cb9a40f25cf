use rand::Rng;

use super::gumbel::gumbel_noise;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Index of a value node in the tape arena.
pub type NodeId = usize;

/// A recorded operation. Forward values are computed at record time; the
/// variants carry everything backward needs (ids plus saved buffers).
#[derive(Debug, Clone)]
enum Op {
    /// out = A @ B, A: [m,k], B: [k,n]
    Matmul { a: NodeId, b: NodeId, out: NodeId, m: usize, k: usize, n: usize },
    /// out[r,c] = mat[r,c] + vec[c]
    AddRowVec { mat: NodeId, vec: NodeId, out: NodeId },
    /// out[r,c] = mat[r,c] * vec[c]
    MulRowVec { mat: NodeId, vec: NodeId, out: NodeId },
    /// out[r,c] = mat[r,c] - vec[r]
    SubColVec { mat: NodeId, vec: NodeId, out: NodeId },
    Add { a: NodeId, b: NodeId, out: NodeId },
    Sub { a: NodeId, b: NodeId, out: NodeId },
    Mul { a: NodeId, b: NodeId, out: NodeId },
    Div { a: NodeId, b: NodeId, out: NodeId },
    /// Elementwise minimum; ties route the gradient to `a`.
    Min { a: NodeId, b: NodeId, out: NodeId },
    /// out = scale * x + shift; the shift is applied at record time and
    /// does not appear in the gradient.
    Affine { x: NodeId, scale: f64, out: NodeId },
    Relu { x: NodeId, out: NodeId },
    Tanh { x: NodeId, out: NodeId },
    Exp { x: NodeId, out: NodeId },
    Ln { x: NodeId, out: NodeId },
    Softplus { x: NodeId, out: NodeId },
    /// Gradient passes only strictly inside the interval.
    Clamp { x: NodeId, lo: f64, hi: f64, out: NodeId },
    RowSoftmax { x: NodeId, out: NodeId },
    /// out[r] = log sum_c exp(x[r,c])
    RowLogSumExp { x: NodeId, out: NodeId },
    /// out[r] = sum_c x[r,c]
    RowSum { x: NodeId, out: NodeId },
    Sum { x: NodeId, out: NodeId },
    Mean { x: NodeId, out: NodeId },
    /// out = sum_i x_i * w_i (scalar)
    DotConst { x: NodeId, w: Vec<f64>, out: NodeId },
    /// out_i = x_i * w_i for a constant weight vector
    MulConst { x: NodeId, w: Vec<f64>, out: NodeId },
    ConcatCols { a: NodeId, b: NodeId, out: NodeId },
    SliceCols { x: NodeId, out: NodeId, start: usize, len: usize },
    /// out rows are x rows at `idx`; backward scatter-adds.
    GatherRows { x: NodeId, idx: Vec<usize>, out: NodeId },
    /// Straight-through Bernoulli sample per (draw, edge) cell.
    ///
    /// `logits` is `[n_edges, 2]`; `out` is `[n_draws, n_edges]` holding hard
    /// 0/1 values. `soft` saves the class-0 relaxed probability per cell so
    /// backward can route gradients through the soft sample.
    GumbelBernoulli { logits: NodeId, out: NodeId, soft: Vec<f64>, tau: f64 },
}

/// Wengert tape: records operations forward, replays them in reverse.
///
/// Values live in an arena indexed by [`NodeId`]. Parameters are registered
/// with [`Tape::param`] (a snapshot copy) and their gradients read back after
/// [`Tape::backward`]. One tape per loss evaluation; tapes are not reused.
pub struct Tape {
    vals: Vec<Tensor>,
    ops: Vec<Op>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { vals: Vec::new(), ops: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, t: Tensor) -> NodeId {
        let id = self.vals.len();
        self.vals.push(t);
        self.grads.push(None);
        id
    }

    /// Register a constant leaf (inputs, targets). Gradients still
    /// accumulate into it but are typically ignored.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t)
    }

    /// Register a trainable parameter; the tape holds its own copy.
    pub fn param(&mut self, t: &Tensor) -> NodeId {
        self.push(t.clone())
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.vals[id]
    }

    /// Gradient accumulated for `id`, if any flowed to it.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id].as_deref()
    }

    /// Gradient for a node, zeros if nothing flowed.
    pub fn grad_or_zeros(&self, id: NodeId) -> Vec<f64> {
        match &self.grads[id] {
            Some(g) => g.clone(),
            None => vec![0.0; self.vals[id].numel()],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.vals.len()
    }

    // ── forward helpers ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, k) = (self.vals[a].rows(), self.vals[a].cols());
        let (k2, n) = (self.vals[b].rows(), self.vals[b].cols());
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        {
            let av = self.vals[a].data();
            let bv = self.vals[b].data();
            matmul_into(av, bv, &mut out, m, k, n);
        }
        let out_id = self.push(Tensor::matrix(m, n, out));
        self.ops.push(Op::Matmul { a, b, out: out_id, m, k, n });
        out_id
    }

    pub fn add_row_vec(&mut self, mat: NodeId, vec: NodeId) -> NodeId {
        let (r, c) = (self.vals[mat].rows(), self.vals[mat].cols());
        assert_eq!(self.vals[vec].numel(), c, "row-vector width mismatch");
        let mut out = self.vals[mat].data().to_vec();
        let v = self.vals[vec].data();
        for row in 0..r {
            for col in 0..c {
                out[row * c + col] += v[col];
            }
        }
        let out_id = self.push(Tensor::matrix(r, c, out));
        self.ops.push(Op::AddRowVec { mat, vec, out: out_id });
        out_id
    }

    pub fn mul_row_vec(&mut self, mat: NodeId, vec: NodeId) -> NodeId {
        let (r, c) = (self.vals[mat].rows(), self.vals[mat].cols());
        assert_eq!(self.vals[vec].numel(), c, "row-vector width mismatch");
        let mut out = self.vals[mat].data().to_vec();
        let v = self.vals[vec].data();
        for row in 0..r {
            for col in 0..c {
                out[row * c + col] *= v[col];
            }
        }
        let out_id = self.push(Tensor::matrix(r, c, out));
        self.ops.push(Op::MulRowVec { mat, vec, out: out_id });
        out_id
    }

    pub fn sub_col_vec(&mut self, mat: NodeId, vec: NodeId) -> NodeId {
        let (r, c) = (self.vals[mat].rows(), self.vals[mat].cols());
        assert_eq!(self.vals[vec].numel(), r, "column-vector height mismatch");
        let mut out = self.vals[mat].data().to_vec();
        let v = self.vals[vec].data();
        for row in 0..r {
            for col in 0..c {
                out[row * c + col] -= v[row];
            }
        }
        let out_id = self.push(Tensor::matrix(r, c, out));
        self.ops.push(Op::SubColVec { mat, vec, out: out_id });
        out_id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.zip(a, b, |x, y| x + y);
        self.ops.push(Op::Add { a, b, out });
        out
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.zip(a, b, |x, y| x - y);
        self.ops.push(Op::Sub { a, b, out });
        out
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.zip(a, b, |x, y| x * y);
        self.ops.push(Op::Mul { a, b, out });
        out
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.zip(a, b, |x, y| x / y);
        self.ops.push(Op::Div { a, b, out });
        out
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.zip(a, b, f64::min);
        self.ops.push(Op::Min { a, b, out });
        out
    }

    fn zip(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> NodeId {
        assert_eq!(
            self.vals[a].numel(),
            self.vals[b].numel(),
            "elementwise op on mismatched sizes"
        );
        let data: Vec<f64> = self.vals[a]
            .data()
            .iter()
            .zip(self.vals[b].data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(Tensor::new(self.vals[a].shape().to_vec(), data))
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let out = self.map(x, |v| scale * v + shift);
        self.ops.push(Op::Affine { x, scale, out });
        out
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.map(x, |v| v.max(0.0));
        self.ops.push(Op::Relu { x, out });
        out
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.map(x, f64::tanh);
        self.ops.push(Op::Tanh { x, out });
        out
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let out = self.map(x, f64::exp);
        self.ops.push(Op::Exp { x, out });
        out
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let out = self.map(x, f64::ln);
        self.ops.push(Op::Ln { x, out });
        out
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let out = self.map(x, softplus);
        self.ops.push(Op::Softplus { x, out });
        out
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.map(x, |v| v.clamp(lo, hi));
        self.ops.push(Op::Clamp { x, lo, hi, out });
        out
    }

    fn map(&mut self, x: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let data: Vec<f64> = self.vals[x].data().iter().map(|&v| f(v)).collect();
        self.push(Tensor::new(self.vals[x].shape().to_vec(), data))
    }

    pub fn row_softmax(&mut self, x: NodeId) -> NodeId {
        let (r, c) = (self.vals[x].rows(), self.vals[x].cols());
        let mut out = vec![0.0; r * c];
        for row in 0..r {
            let xs = self.vals[x].row(row);
            let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for col in 0..c {
                let e = (xs[col] - m).exp();
                out[row * c + col] = e;
                z += e;
            }
            for col in 0..c {
                out[row * c + col] /= z;
            }
        }
        let out_id = self.push(Tensor::matrix(r, c, out));
        self.ops.push(Op::RowSoftmax { x, out: out_id });
        out_id
    }

    pub fn row_logsumexp(&mut self, x: NodeId) -> NodeId {
        let r = self.vals[x].rows();
        let mut out = vec![0.0; r];
        for row in 0..r {
            let xs = self.vals[x].row(row);
            let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = xs.iter().map(|&v| (v - m).exp()).sum();
            out[row] = m + z.ln();
        }
        let out_id = self.push(Tensor::vector(out));
        self.ops.push(Op::RowLogSumExp { x, out: out_id });
        out_id
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let r = self.vals[x].rows();
        let mut out = vec![0.0; r];
        for row in 0..r {
            out[row] = self.vals[x].row(row).iter().sum();
        }
        let out_id = self.push(Tensor::vector(out));
        self.ops.push(Op::RowSum { x, out: out_id });
        out_id
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.vals[x].data().iter().sum();
        let out = self.push(Tensor::scalar(s));
        self.ops.push(Op::Sum { x, out });
        out
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.vals[x].numel() as f64;
        let s: f64 = self.vals[x].data().iter().sum();
        let out = self.push(Tensor::scalar(s / n));
        self.ops.push(Op::Mean { x, out });
        out
    }

    pub fn dot_const(&mut self, x: NodeId, w: &[f64]) -> NodeId {
        assert_eq!(self.vals[x].numel(), w.len(), "dot_const length mismatch");
        let s: f64 = self.vals[x].data().iter().zip(w).map(|(a, b)| a * b).sum();
        let out = self.push(Tensor::scalar(s));
        self.ops.push(Op::DotConst { x, w: w.to_vec(), out });
        out
    }

    pub fn mul_const(&mut self, x: NodeId, w: &[f64]) -> NodeId {
        assert_eq!(self.vals[x].numel(), w.len(), "mul_const length mismatch");
        let data: Vec<f64> =
            self.vals[x].data().iter().zip(w).map(|(a, b)| a * b).collect();
        let out = self.push(Tensor::new(self.vals[x].shape().to_vec(), data));
        self.ops.push(Op::MulConst { x, w: w.to_vec(), out });
        out
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (r, ca) = (self.vals[a].rows(), self.vals[a].cols());
        let (rb, cb) = (self.vals[b].rows(), self.vals[b].cols());
        assert_eq!(r, rb, "concat_cols row mismatch");
        let mut data = Vec::with_capacity(r * (ca + cb));
        for row in 0..r {
            data.extend_from_slice(self.vals[a].row(row));
            data.extend_from_slice(self.vals[b].row(row));
        }
        let out = self.push(Tensor::matrix(r, ca + cb, data));
        self.ops.push(Op::ConcatCols { a, b, out });
        out
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = (self.vals[x].rows(), self.vals[x].cols());
        assert!(start + len <= c, "slice_cols out of range");
        let mut data = Vec::with_capacity(r * len);
        for row in 0..r {
            data.extend_from_slice(&self.vals[x].row(row)[start..start + len]);
        }
        let out = self.push(Tensor::matrix(r, len, data));
        self.ops.push(Op::SliceCols { x, out, start, len });
        out
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: &[usize]) -> NodeId {
        let c = self.vals[x].cols();
        let rows = self.vals[x].rows();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < rows, "gather_rows index {i} out of {rows}");
            data.extend_from_slice(self.vals[x].row(i));
        }
        let out = self.push(Tensor::matrix(idx.len(), c, data));
        self.ops.push(Op::GatherRows { x, idx: idx.to_vec(), out });
        out
    }

    /// Draw `n_draws` straight-through Bernoulli samples per edge.
    ///
    /// `logits` must be `[n_edges, 2]`: column 0 is the unnormalized
    /// log-probability of the edge existing. The output is `[n_draws,
    /// n_edges]` of hard 0/1 values whose gradient is the relaxed
    /// (temperature-`tau`) sample's gradient.
    pub fn gumbel_bernoulli<R: Rng>(
        &mut self,
        logits: NodeId,
        n_draws: usize,
        tau: f64,
        rng: &mut R,
    ) -> Result<NodeId> {
        if tau <= 0.0 {
            return Err(Error::config(format!("gumbel temperature must be > 0, got {tau}")));
        }
        let e = self.vals[logits].rows();
        assert_eq!(self.vals[logits].cols(), 2, "gumbel logits must be [n_edges, 2]");
        let mut noise = Vec::with_capacity(n_draws * e * 2);
        for _ in 0..n_draws * e * 2 {
            noise.push(gumbel_noise(rng));
        }
        self.gumbel_bernoulli_with_noise(logits, n_draws, tau, &noise, false)
    }

    /// Gumbel sampling with caller-provided noise (two values per cell).
    ///
    /// With `soft_forward` the forward value is the relaxed probability
    /// instead of the hard 0/1 sample; the gradient is identical in both
    /// modes, which is what makes the straight-through estimator checkable
    /// by finite differences on the soft path.
    pub fn gumbel_bernoulli_with_noise(
        &mut self,
        logits: NodeId,
        n_draws: usize,
        tau: f64,
        noise: &[f64],
        soft_forward: bool,
    ) -> Result<NodeId> {
        if tau <= 0.0 {
            return Err(Error::config(format!("gumbel temperature must be > 0, got {tau}")));
        }
        let e = self.vals[logits].rows();
        assert_eq!(self.vals[logits].cols(), 2, "gumbel logits must be [n_edges, 2]");
        assert_eq!(noise.len(), n_draws * e * 2, "noise length mismatch");
        let mut hard = vec![0.0; n_draws * e];
        let mut soft = vec![0.0; n_draws * e];
        for d in 0..n_draws {
            for edge in 0..e {
                let l = self.vals[logits].row(edge);
                let g0 = noise[(d * e + edge) * 2];
                let g1 = noise[(d * e + edge) * 2 + 1];
                let z = ((l[0] + g0) - (l[1] + g1)) / tau;
                let p = sigmoid(z);
                soft[d * e + edge] = p;
                hard[d * e + edge] = if p >= 0.5 { 1.0 } else { 0.0 };
            }
        }
        let data = if soft_forward { soft.clone() } else { hard };
        let out = self.push(Tensor::matrix(n_draws, e, data));
        self.ops.push(Op::GumbelBernoulli { logits, out, soft, tau });
        Ok(out)
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss node. Seeds the loss gradient with
    /// 1 and accumulates into every reachable node.
    ///
    /// Intermediate-node gradients are consumed as the sweep passes their
    /// producing op; after backward only leaf nodes (params, inputs) still
    /// hold gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.vals[loss].is_scalar() {
            return Err(Error::usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.vals[loss].shape()
            )));
        }
        if !self.vals[loss].item().is_finite() {
            return Err(Error::numeric(format!(
                "loss is not finite: {}",
                self.vals[loss].item()
            )));
        }
        let mut grads = std::mem::take(&mut self.grads);
        grads[loss] = Some(vec![1.0]);
        for op in self.ops.iter().rev() {
            backward_op(&self.vals, op, &mut grads);
        }
        self.grads = grads;
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, contrib: Vec<f64>) {
    match &mut grads[id] {
        Some(g) => {
            for (gi, ci) in g.iter_mut().zip(&contrib) {
                *gi += ci;
            }
        }
        None => grads[id] = Some(contrib),
    }
}

fn backward_op(vals: &[Tensor], op: &Op, grads: &mut [Option<Vec<f64>>]) {
    match op {
        Op::Matmul { a, b, out, m, k, n } => {
            let Some(d) = grads[*out].take() else { return };
            let (m, k, n) = (*m, *k, *n);
            let av = vals[*a].data();
            let bv = vals[*b].data();
            // dA = dOut @ B^T
            let mut da = vec![0.0; m * k];
            for r in 0..m {
                for c in 0..k {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += d[r * n + j] * bv[c * n + j];
                    }
                    da[r * k + c] = acc;
                }
            }
            accumulate(grads, *a, da);
            // dB = A^T @ dOut
            let mut db = vec![0.0; k * n];
            for j in 0..m {
                let drow = &d[j * n..(j + 1) * n];
                let arow = &av[j * k..(j + 1) * k];
                for (r, &avj) in arow.iter().enumerate() {
                    let dbrow = &mut db[r * n..(r + 1) * n];
                    for (dbv, &dv) in dbrow.iter_mut().zip(drow) {
                        *dbv += avj * dv;
                    }
                }
            }
            accumulate(grads, *b, db);
        }
        Op::AddRowVec { mat, vec, out } => {
            let Some(d) = grads[*out].take() else { return };
            let c = vals[*vec].numel();
            let mut dv = vec![0.0; c];
            for (i, di) in d.iter().enumerate() {
                dv[i % c] += di;
            }
            accumulate(grads, *mat, d);
            accumulate(grads, *vec, dv);
        }
        Op::MulRowVec { mat, vec, out } => {
            let Some(d) = grads[*out].take() else { return };
            let c = vals[*vec].numel();
            let v = vals[*vec].data();
            let mv = vals[*mat].data();
            let mut dv = vec![0.0; c];
            for (i, di) in d.iter().enumerate() {
                dv[i % c] += di * mv[i];
            }
            let dm: Vec<f64> = d.iter().enumerate().map(|(i, di)| di * v[i % c]).collect();
            accumulate(grads, *mat, dm);
            accumulate(grads, *vec, dv);
        }
        Op::SubColVec { mat, vec, out } => {
            let Some(d) = grads[*out].take() else { return };
            let r = vals[*vec].numel();
            let c = d.len() / r;
            let mut dv = vec![0.0; r];
            for row in 0..r {
                for col in 0..c {
                    dv[row] -= d[row * c + col];
                }
            }
            accumulate(grads, *mat, d);
            accumulate(grads, *vec, dv);
        }
        Op::Add { a, b, out } => {
            let Some(d) = grads[*out].take() else { return };
            accumulate(grads, *a, d.clone());
            accumulate(grads, *b, d);
        }
        Op::Sub { a, b, out } => {
            let Some(d) = grads[*out].take() else { return };
            let neg: Vec<f64> = d.iter().map(|v| -v).collect();
            accumulate(grads, *a, d);
            accumulate(grads, *b, neg);
        }
        Op::Mul { a, b, out } => {
            let Some(d) = grads[*out].take() else { return };
            let da: Vec<f64> = d.iter().zip(vals[*b].data()).map(|(x, y)| x * y).collect();
            let db: Vec<f64> = d.iter().zip(vals[*a].data()).map(|(x, y)| x * y).collect();
            accumulate(grads, *a, da);
            accumulate(grads, *b, db);
        }
        Op::Div { a, b, out } => {
            let Some(d) = grads[*out].take() else { return };
            let bv = vals[*b].data();
            let ov = vals[*out].data();
            let da: Vec<f64> = d.iter().zip(bv).map(|(x, y)| x / y).collect();
            let db: Vec<f64> = d
                .iter()
                .zip(ov.iter().zip(bv))
                .map(|(x, (o, y))| -x * o / y)
                .collect();
            accumulate(grads, *a, da);
            accumulate(grads, *b, db);
        }
        Op::Min { a, b, out } => {
            let Some(d) = grads[*out].take() else { return };
            let av = vals[*a].data();
            let bv = vals[*b].data();
            let da: Vec<f64> = d
                .iter()
                .zip(av.iter().zip(bv))
                .map(|(g, (x, y))| if x <= y { *g } else { 0.0 })
                .collect();
            let db: Vec<f64> = d
                .iter()
                .zip(av.iter().zip(bv))
                .map(|(g, (x, y))| if x > y { *g } else { 0.0 })
                .collect();
            accumulate(grads, *a, da);
            accumulate(grads, *b, db);
        }
        Op::Affine { x, scale, out } => {
            let Some(mut d) = grads[*out].take() else { return };
            for v in d.iter_mut() {
                *v *= scale;
            }
            accumulate(grads, *x, d);
        }
        Op::Relu { x, out } => {
            let Some(mut d) = grads[*out].take() else { return };
            for (g, &v) in d.iter_mut().zip(vals[*x].data()) {
                if v <= 0.0 {
                    *g = 0.0;
                }
            }
            accumulate(grads, *x, d);
        }
        Op::Tanh { x, out } => {
            let Some(mut d) = grads[*out].take() else { return };
            for (g, &o) in d.iter_mut().zip(vals[*out].data()) {
                *g *= 1.0 - o * o;
            }
            accumulate(grads, *x, d);
        }
        Op::Exp { x, out } => {
            let Some(mut d) = grads[*out].take() else { return };
            for (g, &o) in d.iter_mut().zip(vals[*out].data()) {
                *g *= o;
            }
            accumulate(grads, *x, d);
        }
        Op::Ln { x, out } => {
            let Some(mut d) = grads[*out].take() else { return };
            for (g, &v) in d.iter_mut().zip(vals[*x].data()) {
                *g /= v;
            }
            accumulate(grads, *x, d);
        }
        Op::Softplus { x, out } => {
            let Some(mut d) = grads[*out].take() else { return };
            for (g, &v) in d.iter_mut().zip(vals[*x].data()) {
                *g *= sigmoid(v);
            }
            accumulate(grads, *x, d);
        }
        Op::Clamp { x, lo, hi, out } => {
            let Some(mut d) = grads[*out].take() else { return };
            for (g, &v) in d.iter_mut().zip(vals[*x].data()) {
                if v <= *lo || v >= *hi {
                    *g = 0.0;
                }
            }
            accumulate(grads, *x, d);
        }
        Op::RowSoftmax { x, out } => {
            let Some(d) = grads[*out].take() else { return };
            let (r, c) = (vals[*out].rows(), vals[*out].cols());
            let o = vals[*out].data();
            let mut dx = vec![0.0; r * c];
            for row in 0..r {
                let base = row * c;
                let dot: f64 = (0..c).map(|col| d[base + col] * o[base + col]).sum();
                for col in 0..c {
                    dx[base + col] = o[base + col] * (d[base + col] - dot);
                }
            }
            accumulate(grads, *x, dx);
        }
        Op::RowLogSumExp { x, out } => {
            let Some(d) = grads[*out].take() else { return };
            let (r, c) = (vals[*x].rows(), vals[*x].cols());
            let o = vals[*out].data();
            let xv = vals[*x].data();
            let mut dx = vec![0.0; r * c];
            for row in 0..r {
                for col in 0..c {
                    dx[row * c + col] = d[row] * (xv[row * c + col] - o[row]).exp();
                }
            }
            accumulate(grads, *x, dx);
        }
        Op::RowSum { x, out } => {
            let Some(d) = grads[*out].take() else { return };
            let (r, c) = (vals[*x].rows(), vals[*x].cols());
            let mut dx = vec![0.0; r * c];
            for row in 0..r {
                for col in 0..c {
                    dx[row * c + col] = d[row];
                }
            }
            accumulate(grads, *x, dx);
        }
        Op::Sum { x, out } => {
            let Some(d) = grads[*out].take() else { return };
            let dx = vec![d[0]; vals[*x].numel()];
            accumulate(grads, *x, dx);
        }
        Op::Mean { x, out } => {
            let Some(d) = grads[*out].take() else { return };
            let n = vals[*x].numel();
            let dx = vec![d[0] / n as f64; n];
            accumulate(grads, *x, dx);
        }
        Op::DotConst { x, w, out } => {
            let Some(d) = grads[*out].take() else { return };
            let dx: Vec<f64> = w.iter().map(|wi| d[0] * wi).collect();
            accumulate(grads, *x, dx);
        }
        Op::MulConst { x, w, out } => {
            let Some(mut d) = grads[*out].take() else { return };
            for (g, wi) in d.iter_mut().zip(w) {
                *g *= wi;
            }
            accumulate(grads, *x, d);
        }
        Op::ConcatCols { a, b, out } => {
            let Some(d) = grads[*out].take() else { return };
            let (r, ca) = (vals[*a].rows(), vals[*a].cols());
            let cb = vals[*b].cols();
            let mut da = vec![0.0; r * ca];
            let mut db = vec![0.0; r * cb];
            for row in 0..r {
                let base = row * (ca + cb);
                da[row * ca..(row + 1) * ca].copy_from_slice(&d[base..base + ca]);
                db[row * cb..(row + 1) * cb].copy_from_slice(&d[base + ca..base + ca + cb]);
            }
            accumulate(grads, *a, da);
            accumulate(grads, *b, db);
        }
        Op::SliceCols { x, out, start, len } => {
            let Some(d) = grads[*out].take() else { return };
            let (r, c) = (vals[*x].rows(), vals[*x].cols());
            let mut dx = vec![0.0; r * c];
            for row in 0..r {
                dx[row * c + start..row * c + start + len]
                    .copy_from_slice(&d[row * len..(row + 1) * len]);
            }
            accumulate(grads, *x, dx);
        }
        Op::GatherRows { x, idx, out } => {
            let Some(d) = grads[*out].take() else { return };
            let c = vals[*x].cols();
            let mut dx = vec![0.0; vals[*x].numel()];
            for (r, &i) in idx.iter().enumerate() {
                for col in 0..c {
                    dx[i * c + col] += d[r * c + col];
                }
            }
            accumulate(grads, *x, dx);
        }
        Op::GumbelBernoulli { logits, out, soft, tau } => {
            let Some(d) = grads[*out].take() else { return };
            let e = vals[*logits].rows();
            let mut dl = vec![0.0; e * 2];
            for (cell, g) in d.iter().enumerate() {
                let p = soft[cell];
                let dp = g * p * (1.0 - p) / tau;
                let edge = cell % e;
                dl[edge * 2] += dp;
                dl[edge * 2 + 1] -= dp;
            }
            accumulate(grads, *logits, dl);
        }
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let ar = &a[r * k..(r + 1) * k];
        let or = &mut out[r * n..(r + 1) * n];
        for (i, &av) in ar.iter().enumerate() {
            let br = &b[i * n..(i + 1) * n];
            for (o, &bv) in or.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    // log(1 + e^x), stable for large |x|
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
