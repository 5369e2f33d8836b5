//! Reverse-mode differentiation over a recorded sequence of matrix ops.
//!
//! A [`Tape`] borrows a [`Params`] store, records every op of a forward pass and
//! can then run [`Tape::backward`] from a scalar node to get gradients for every
//! parameter. Inputs that do not need gradients are added with [`Tape::input`].

use super::mat::{gemm, Mat};

/// Named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub values: Vec<Mat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl Params {
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.values.iter().map(|m| Mat::zeros(m.rows, m.cols)).collect()
    }

    pub fn position(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    BatchNorm { x: Var, gamma: Var, xhat: Mat, inv_std: Vec<f64> },
    SoftmaxXent { logits: Var, labels: Vec<usize>, weights: Vec<f64>, probs: Mat },
    Mse { pred: Var, target: Mat, mask: Mat, denom: f64 },
    Attention { query: Var, memory: Var, lengths: Vec<usize>, max_len: usize, weights: Mat },
    GruSeq { xp: Var, wh: Var, bh: Var, batch: usize, gates: Mat, hn: Mat },
    LstmSeq { xp: Var, wh: Var, step_bias: Option<Var>, batch: usize, gates: Mat, cells: Mat },
}

enum Value {
    Owned(Mat),
    Param(usize),
}

struct Node {
    value: Value,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p Params,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Params) -> Self {
        Self { params, nodes: Vec::with_capacity(1024) }
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0].value {
            Value::Owned(m) => m,
            Value::Param(i) => &self.params.values[*i],
        }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value: Value::Owned(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: Value::Param(id.0), op: Op::Param(id.0) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Mat::zeros(va.rows, vb.cols);
        gemm(1.0, va, false, vb, false, 0.0, &mut out);
        self.push(out, Op::MatMul(a, b))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (va, vb) = (self.value(a), self.value(b));
        assert!(va.same_shape(vb), "shape mismatch {}x{} vs {}x{}", va.rows, va.cols, vb.rows, vb.cols);
        Mat::from_vec(va.rows, va.cols, va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!((vr.rows, vr.cols), (1, va.cols), "row broadcast shape");
        let mut out = va.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&vr.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// `k * a + c`
    pub fn affine(&mut self, a: Var, k: f64, c: f64) -> Var {
        let out = self.value(a).map(|v| k * v + c);
        self.push(out, Op::Affine(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + v.cols].copy_from_slice(v.row(r));
            }
            off += v.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice_cols(start, end);
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&v.data);
            rows += v.rows;
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice_rows(start, end);
        self.push(out, Op::SliceRows(a, start))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let va = self.value(a);
        let mut out = Mat::zeros(idx.len(), va.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(va.row(i));
        }
        self.push(out, Op::GatherRows(a, idx.to_vec()))
    }

    /// Training-mode batch normalization over rows. Returns the output and the
    /// batch mean/variance (population variance) used.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> (Var, Vec<f64>, Vec<f64>) {
        let vx = self.value(x);
        let (n, d) = (vx.rows, vx.cols);
        assert!(n > 0, "batch norm on empty batch");
        let mean = vx.col_means();
        let mut var = vec![0.0; d];
        for r in 0..n {
            for (c, v) in vx.row(r).iter().enumerate() {
                let e = v - mean[c];
                var[c] += e * e;
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = Mat::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                xhat.set(r, c, (vx.get(r, c) - mean[c]) * inv_std[c]);
            }
        }
        let g = self.value(gamma);
        let mut out = Mat::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                out.set(r, c, g.data[c] * xhat.get(r, c));
            }
        }
        let scaled = self.push(out, Op::BatchNorm { x, gamma, xhat, inv_std });
        (self.add_row(scaled, beta), mean, var)
    }

    /// Mean over rows of `w_i * -log softmax(logits_i)[label_i]`. Returns a 1×1 node.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize], weights: &[f64]) -> Var {
        let vl = self.value(logits);
        assert_eq!(vl.rows, labels.len());
        assert_eq!(labels.len(), weights.len());
        let probs = softmax_rows(vl);
        let mut exact = 0.0;
        for (r, (&y, &w)) in labels.iter().zip(weights).enumerate() {
            exact += w * (log_sum_exp(vl.row(r)) - vl.get(r, y));
        }
        let loss = exact / labels.len().max(1) as f64;
        self.push(
            Mat::from_vec(1, 1, vec![loss]),
            Op::SoftmaxXent { logits, labels: labels.to_vec(), weights: weights.to_vec(), probs },
        )
    }

    /// Masked mean squared error: `Σ mask·(pred−target)² / Σ mask`. Returns a 1×1 node.
    pub fn mse(&mut self, pred: Var, target: Mat, mask: Mat) -> Var {
        let vp = self.value(pred);
        assert!(vp.same_shape(&target) && vp.same_shape(&mask), "mse shape mismatch");
        let denom = mask.sum().max(1e-12);
        let mut s = 0.0;
        for i in 0..vp.data.len() {
            let e = vp.data[i] - target.data[i];
            s += mask.data[i] * e * e;
        }
        self.push(Mat::from_vec(1, 1, vec![s / denom]), Op::Mse { pred, target, mask, denom })
    }

    /// Dot-product global attention. `memory` stacks `N` blocks of
    /// `max_len×d` rows (batch-major) and `lengths` has one entry per block;
    /// only the first `lengths[k]` rows of block `k` are attended. Query row
    /// `i` attends block `i mod N`, so a time-major `(T·N)×d` query works.
    /// Returns one context row per query row.
    pub fn attention(&mut self, query: Var, memory: Var, lengths: &[usize], max_len: usize) -> Var {
        let (q, m) = (self.value(query), self.value(memory));
        let (rows, d, nb) = (q.rows, q.cols, lengths.len());
        assert!(nb >= 1 && rows % nb == 0, "query rows must be a multiple of the block count");
        assert_eq!(m.rows, nb * max_len, "memory rows");
        assert_eq!(m.cols, d, "memory width");
        let mut weights = Mat::zeros(rows, max_len);
        let mut ctx = Mat::zeros(rows, d);
        for i in 0..rows {
            let blk = i % nb;
            let len = lengths[blk];
            assert!(len >= 1 && len <= max_len, "attention length out of range");
            let qi = q.row(i);
            let scores: Vec<f64> = (0..len).map(|l| dot(qi, m.row(blk * max_len + l))).collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = exps.iter().sum();
            for l in 0..len {
                let a = exps[l] / z;
                weights.set(i, l, a);
                let mrow = m.row(blk * max_len + l);
                for (c, mv) in ctx.row_mut(i).iter_mut().zip(mrow) {
                    *c += a * mv;
                }
            }
        }
        self.push(ctx, Op::Attention { query, memory, lengths: lengths.to_vec(), max_len, weights })
    }

    /// GRU recurrence over precomputed time-major input projections `xp`
    /// (`(T·B)×3H`, gate order reset, update, candidate). `wh` is `H×3H` and
    /// `bh` is `1×3H`. Returns the stacked hidden states `(T·B)×H`.
    pub fn gru_seq(&mut self, xp: Var, wh: Var, bh: Var, batch: usize) -> Var {
        let (vx, w, b) = (self.value(xp), self.value(wh), self.value(bh));
        let h = w.rows;
        assert_eq!(w.cols, 3 * h, "recurrent weight shape");
        assert_eq!(vx.cols, 3 * h, "input projection width");
        assert_eq!(b.len(), 3 * h, "recurrent bias width");
        assert!(batch > 0 && vx.rows % batch == 0, "rows must be a multiple of the batch");
        let (rows, steps) = (vx.rows, vx.rows / batch);
        let mut out = Mat::zeros(rows, h);
        let mut gates = Mat::zeros(rows, 3 * h);
        let mut hn = Mat::zeros(rows, h);
        let mut state = Mat::zeros(batch, h);
        let mut hp = Mat::zeros(batch, 3 * h);
        for t in 0..steps {
            gemm(1.0, &state, false, w, false, 0.0, &mut hp);
            for bi in 0..batch {
                let row = t * batch + bi;
                let (x, p) = (vx.row(row), hp.row(bi));
                let bd = &b.data;
                for j in 0..h {
                    let rv = sigmoid(x[j] + p[j] + bd[j]);
                    let zv = sigmoid(x[h + j] + p[h + j] + bd[h + j]);
                    let hnv = p[2 * h + j] + bd[2 * h + j];
                    let nv = (x[2 * h + j] + rv * hnv).tanh();
                    let prev = state.data[bi * h + j];
                    out.data[row * h + j] = nv + zv * (prev - nv);
                    let gr = gates.row_mut(row);
                    gr[j] = rv;
                    gr[h + j] = zv;
                    gr[2 * h + j] = nv;
                    hn.data[row * h + j] = hnv;
                }
            }
            state.data.copy_from_slice(&out.data[t * batch * h..(t + 1) * batch * h]);
        }
        self.push(out, Op::GruSeq { xp, wh, bh, batch, gates, hn })
    }

    /// LSTM recurrence over precomputed time-major input projections `xp`
    /// (`(T·B)×4H`, gate order input, forget, cell, output, bias included).
    /// `step_bias`, when given, is a `B×4H` node added at every step.
    /// Returns the stacked hidden states `(T·B)×H`.
    pub fn lstm_seq(&mut self, xp: Var, wh: Var, step_bias: Option<Var>, batch: usize) -> Var {
        let (vx, w) = (self.value(xp), self.value(wh));
        let h = w.rows;
        assert_eq!(w.cols, 4 * h, "recurrent weight shape");
        assert_eq!(vx.cols, 4 * h, "input projection width");
        assert!(batch > 0 && vx.rows % batch == 0, "rows must be a multiple of the batch");
        let sb = step_bias.map(|v| self.value(v));
        if let Some(sb) = sb {
            assert_eq!((sb.rows, sb.cols), (batch, 4 * h), "step bias shape");
        }
        let (rows, steps) = (vx.rows, vx.rows / batch);
        let mut out = Mat::zeros(rows, h);
        let mut gates = Mat::zeros(rows, 4 * h);
        let mut cells = Mat::zeros(rows, h);
        let mut state = Mat::zeros(batch, h);
        let mut cell = vec![0.0; batch * h];
        let mut pre = Mat::zeros(batch, 4 * h);
        for t in 0..steps {
            gemm(1.0, &state, false, w, false, 0.0, &mut pre);
            for bi in 0..batch {
                let row = t * batch + bi;
                let x = vx.row(row);
                let p = pre.row(bi);
                let gr = gates.row_mut(row);
                for k in 0..4 * h {
                    let mut v = x[k] + p[k];
                    if let Some(sb) = sb {
                        v += sb.data[bi * 4 * h + k];
                    }
                    gr[k] = if (2 * h..3 * h).contains(&k) { v.tanh() } else { sigmoid(v) };
                }
                for j in 0..h {
                    let c = gr[h + j] * cell[bi * h + j] + gr[j] * gr[2 * h + j];
                    cell[bi * h + j] = c;
                    cells.data[row * h + j] = c;
                    out.data[row * h + j] = gr[3 * h + j] * c.tanh();
                }
            }
            state.data.copy_from_slice(&out.data[t * batch * h..(t + 1) * batch * h]);
        }
        self.push(out, Op::LstmSeq { xp, wh, step_bias, batch, gates, cells })
    }

    /// Attention weights recorded by an [`Tape::attention`] node.
    pub fn attention_weights(&self, v: Var) -> Option<&Mat> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.len(), 1, "not a scalar");
        m.data[0]
    }

    /// Gradients of the 1×1 node `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Vec<Mat> {
        assert_eq!(self.value(loss).len(), 1, "backward from non-scalar");
        self.backward_seeded(loss, Mat::filled(1, 1, 1.0))
    }

    /// Backpropagates an explicit output gradient `seed` from node `out`.
    pub fn backward_seeded(&self, out: Var, seed: Mat) -> Vec<Mat> {
        let mut pgrads = self.params.zeros_like();
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(p) => pgrads[*p].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.needs_grad(*a) {
                        let mut ga = Mat::zeros(va.rows, va.cols);
                        gemm(1.0, &g, false, vb, true, 0.0, &mut ga);
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs_grad(*b) {
                        let mut gb = Mat::zeros(vb.rows, vb.cols);
                        gemm(1.0, va, true, &g, false, 0.0, &mut gb);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.needs_grad(*a) {
                        accumulate(&mut grads, *a, hadamard(&g, vb));
                    }
                    if self.needs_grad(*b) {
                        accumulate(&mut grads, *b, hadamard(&g, va));
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs_grad(*row) {
                        let gr = Mat::row_vector(col_sums(&g));
                        accumulate(&mut grads, *row, gr);
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::Affine(a, k) => {
                    let k = *k;
                    accumulate(&mut grads, *a, g.map(|v| v * k));
                }
                Op::Sigmoid(a) => {
                    let y = self.node_value(i);
                    let ga = Mat::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&y.data).map(|(g, y)| g * y * (1.0 - y)).collect(),
                    );
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = self.node_value(i);
                    let ga = Mat::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&y.data).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    );
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let ga = Mat::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&x.data).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect(),
                    );
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols;
                        if self.needs_grad(p) {
                            accumulate(&mut grads, p, g.slice_cols(off, off + w));
                        }
                        off += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let va = self.value(*a);
                    let mut ga = Mat::zeros(va.rows, va.cols);
                    for r in 0..g.rows {
                        ga.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let h = self.value(p).rows;
                        if self.needs_grad(p) {
                            accumulate(&mut grads, p, g.slice_rows(off, off + h));
                        }
                        off += h;
                    }
                }
                Op::SliceRows(a, start) => {
                    let va = self.value(*a);
                    let mut ga = Mat::zeros(va.rows, va.cols);
                    let s = *start * va.cols;
                    ga.data[s..s + g.data.len()].copy_from_slice(&g.data);
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let va = self.value(*a);
                    let mut ga = Mat::zeros(va.rows, va.cols);
                    for (o, &src) in idx.iter().enumerate() {
                        for (d, s) in ga.row_mut(src).iter_mut().zip(g.row(o)) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::BatchNorm { x, gamma, xhat, inv_std } => {
                    let (n, d) = (xhat.rows, xhat.cols);
                    let gv = self.value(*gamma);
                    let mut dgamma = vec![0.0; d];
                    let mut sum_g = vec![0.0; d];
                    for r in 0..n {
                        for c in 0..d {
                            dgamma[c] += g.get(r, c) * xhat.get(r, c);
                            sum_g[c] += g.get(r, c);
                        }
                    }
                    if self.needs_grad(*x) {
                        let nf = n as f64;
                        let mut gx = Mat::zeros(n, d);
                        for r in 0..n {
                            for c in 0..d {
                                let v = gv.data[c] * inv_std[c] / nf
                                    * (nf * g.get(r, c) - sum_g[c] - xhat.get(r, c) * dgamma[c]);
                                gx.set(r, c, v);
                            }
                        }
                        accumulate(&mut grads, *x, gx);
                    }
                    accumulate(&mut grads, *gamma, Mat::row_vector(dgamma));
                }
                Op::SoftmaxXent { logits, labels, weights, probs } => {
                    let scale = g.data[0] / labels.len().max(1) as f64;
                    let mut gl = probs.clone();
                    for (r, (&y, &w)) in labels.iter().zip(weights).enumerate() {
                        let row = gl.row_mut(r);
                        row[y] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= w * scale;
                        }
                    }
                    accumulate(&mut grads, *logits, gl);
                }
                Op::Mse { pred, target, mask, denom } => {
                    let vp = self.value(*pred);
                    let k = 2.0 * g.data[0] / denom;
                    let gp = Mat::from_vec(
                        vp.rows,
                        vp.cols,
                        (0..vp.data.len())
                            .map(|j| k * mask.data[j] * (vp.data[j] - target.data[j]))
                            .collect(),
                    );
                    accumulate(&mut grads, *pred, gp);
                }
                Op::Attention { query, memory, lengths, max_len, weights } => {
                    let (q, m) = (self.value(*query), self.value(*memory));
                    let (d, nb) = (q.cols, lengths.len());
                    let mut gq = Mat::zeros(q.rows, d);
                    let mut gm = Mat::zeros(m.rows, d);
                    for i in 0..q.rows {
                        let blk = i % nb;
                        let len = lengths[blk];
                        let gc = g.row(i);
                        let da: Vec<f64> = (0..len).map(|l| dot(gc, m.row(blk * max_len + l))).collect();
                        let mean: f64 = (0..len).map(|l| weights.get(i, l) * da[l]).sum();
                        for l in 0..len {
                            let a = weights.get(i, l);
                            let ds = a * (da[l] - mean);
                            let mrow = m.row(blk * max_len + l);
                            for (gqv, mv) in gq.row_mut(i).iter_mut().zip(mrow) {
                                *gqv += ds * mv;
                            }
                            let qrow = q.row(i);
                            let gmrow = gm.row_mut(blk * max_len + l);
                            for c in 0..d {
                                gmrow[c] += a * gc[c] + ds * qrow[c];
                            }
                        }
                    }
                    accumulate(&mut grads, *query, gq);
                    accumulate(&mut grads, *memory, gm);
                }
                Op::GruSeq { xp, wh, bh, batch, gates, hn } => {
                    let states = self.node_value(i);
                    let w = self.value(*wh);
                    let (batch, h) = (*batch, w.rows);
                    let steps = g.rows / batch;
                    let mut gx = Mat::zeros(g.rows, 3 * h);
                    let mut gw = Mat::zeros(h, 3 * h);
                    let mut gb = vec![0.0; 3 * h];
                    let mut dnext = Mat::zeros(batch, h);
                    let mut dhp = Mat::zeros(batch, 3 * h);
                    let mut prev = Mat::zeros(batch, h);
                    for t in (0..steps).rev() {
                        if t > 0 {
                            prev.data.copy_from_slice(&states.data[(t - 1) * batch * h..t * batch * h]);
                        } else {
                            prev.data.fill(0.0);
                        }
                        for bi in 0..batch {
                            let row = t * batch + bi;
                            let gr = gates.row(row);
                            for j in 0..h {
                                let (rv, zv, nv) = (gr[j], gr[h + j], gr[2 * h + j]);
                                let dh = g.data[row * h + j] + dnext.data[bi * h + j];
                                let dn_pre = dh * (1.0 - zv) * (1.0 - nv * nv);
                                let dz_pre = dh * (prev.data[bi * h + j] - nv) * zv * (1.0 - zv);
                                let dr_pre = dn_pre * hn.data[row * h + j] * rv * (1.0 - rv);
                                let gxr = gx.row_mut(row);
                                gxr[j] = dr_pre;
                                gxr[h + j] = dz_pre;
                                gxr[2 * h + j] = dn_pre;
                                let dr = dhp.row_mut(bi);
                                dr[j] = dr_pre;
                                dr[h + j] = dz_pre;
                                dr[2 * h + j] = dn_pre * rv;
                                dnext.data[bi * h + j] = dh * zv;
                            }
                        }
                        gemm(1.0, &prev, true, &dhp, false, 1.0, &mut gw);
                        for (acc, v) in gb.iter_mut().zip(col_sums(&dhp)) {
                            *acc += v;
                        }
                        gemm(1.0, &dhp, false, w, true, 1.0, &mut dnext);
                    }
                    if self.needs_grad(*xp) {
                        accumulate(&mut grads, *xp, gx);
                    }
                    accumulate(&mut grads, *wh, gw);
                    accumulate(&mut grads, *bh, Mat::row_vector(gb));
                }
                Op::LstmSeq { xp, wh, step_bias, batch, gates, cells } => {
                    let states = self.node_value(i);
                    let w = self.value(*wh);
                    let (batch, h) = (*batch, w.rows);
                    let steps = g.rows / batch;
                    let mut gx = Mat::zeros(g.rows, 4 * h);
                    let mut gw = Mat::zeros(h, 4 * h);
                    let mut gsb = Mat::zeros(batch, 4 * h);
                    let mut dnext = Mat::zeros(batch, h);
                    let mut dcnext = vec![0.0; batch * h];
                    let mut dpre = Mat::zeros(batch, 4 * h);
                    let mut prev = Mat::zeros(batch, h);
                    for t in (0..steps).rev() {
                        if t > 0 {
                            prev.data.copy_from_slice(&states.data[(t - 1) * batch * h..t * batch * h]);
                        } else {
                            prev.data.fill(0.0);
                        }
                        for bi in 0..batch {
                            let row = t * batch + bi;
                            let gr = gates.row(row);
                            let dp = dpre.row_mut(bi);
                            for j in 0..h {
                                let (iv, fv, gv, ov) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                                let c = cells.data[row * h + j];
                                let c_prev = if t > 0 { cells.data[(row - batch) * h + j] } else { 0.0 };
                                let tc = c.tanh();
                                let dh = g.data[row * h + j] + dnext.data[bi * h + j];
                                let dc = dcnext[bi * h + j] + dh * ov * (1.0 - tc * tc);
                                dp[j] = dc * gv * iv * (1.0 - iv);
                                dp[h + j] = dc * c_prev * fv * (1.0 - fv);
                                dp[2 * h + j] = dc * iv * (1.0 - gv * gv);
                                dp[3 * h + j] = dh * tc * ov * (1.0 - ov);
                                dcnext[bi * h + j] = dc * fv;
                            }
                            gx.row_mut(row).copy_from_slice(dp);
                        }
                        gsb.add_assign(&dpre);
                        gemm(1.0, &prev, true, &dpre, false, 1.0, &mut gw);
                        gemm(1.0, &dpre, false, w, true, 0.0, &mut dnext);
                    }
                    if self.needs_grad(*xp) {
                        accumulate(&mut grads, *xp, gx);
                    }
                    accumulate(&mut grads, *wh, gw);
                    if let Some(sb) = step_bias {
                        if self.needs_grad(*sb) {
                            accumulate(&mut grads, *sb, gsb);
                        }
                    }
                }
            }
        }
        pgrads
    }

    fn node_value(&self, i: usize) -> &Mat {
        self.value(Var(i))
    }

    fn needs_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Leaf)
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn hadamard(a: &Mat, b: &Mat) -> Mat {
    Mat::from_vec(a.rows, a.cols, a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect())
}

fn col_sums(g: &Mat) -> Vec<f64> {
    let mut s = vec![0.0; g.cols];
    for r in 0..g.rows {
        for (acc, v) in s.iter_mut().zip(g.row(r)) {
            *acc += v;
        }
    }
    s
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn softmax_rows(m: &Mat) -> Mat {
    let mut out = Mat::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        out.row_mut(r).copy_from_slice(&softmax(m.row(r)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::gradient_error;
    use crate::nn::layers::{uniform_mat, Gru, Lstm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn check(params: &Params, f: impl Fn(&mut Tape) -> Var) -> f64 {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape);
        let grads = tape.backward(loss);
        gradient_error(params, &grads, 1e-5, 40, |p| {
            let mut t = Tape::new(p);
            let l = f(&mut t);
            t.scalar(l)
        })
    }

    fn sum_sq(t: &mut Tape, v: Var) -> Var {
        let rows = t.value(v).rows;
        let cols = t.value(v).cols;
        t.mse(v, Mat::zeros(rows, cols), Mat::filled(rows, cols, 1.0))
    }

    #[test]
    fn elementwise_and_structural_ops() {
        let mut r = rng();
        let mut p = Params::default();
        let a = p.add("a", uniform_mat(&mut r, 4, 3, 1.0));
        let b = p.add("b", uniform_mat(&mut r, 3, 5, 1.0));
        let c = p.add("c", uniform_mat(&mut r, 1, 5, 1.0));
        let d = p.add("d", uniform_mat(&mut r, 4, 5, 1.0));
        let err = check(&p, |t| {
            let (a, b, c, d) = (t.param(a), t.param(b), t.param(c), t.param(d));
            let ab = t.matmul(a, b);
            let x = t.add_row(ab, c);
            let s = t.sigmoid(x);
            let th = t.tanh(d);
            let m = t.mul(s, th);
            let e = t.sub(m, d);
            let f = t.affine(e, 2.0, 0.3);
            let g = t.relu(f);
            let h = t.add(g, s);
            let cc = t.concat_cols(&[h, x]);
            let sc = t.slice_cols(cc, 2, 8);
            let cr = t.concat_rows(&[sc, sc]);
            let sr = t.slice_rows(cr, 1, 7);
            let gr = t.gather_rows(sr, &[0, 5, 2, 2]);
            sum_sq(t, gr)
        });
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn batch_norm_and_weighted_xent() {
        let mut r = rng();
        let mut p = Params::default();
        let x = p.add("x", uniform_mat(&mut r, 5, 4, 2.0));
        let w = p.add("w", uniform_mat(&mut r, 4, 3, 1.0));
        let g = p.add("g", uniform_mat(&mut r, 1, 4, 1.0));
        let be = p.add("be", uniform_mat(&mut r, 1, 4, 1.0));
        let err = check(&p, |t| {
            let (x, w, g, be) = (t.param(x), t.param(w), t.param(g), t.param(be));
            let (y, _, _) = t.batch_norm(x, g, be, 1e-5);
            let logits = t.matmul(y, w);
            t.softmax_xent(logits, &[0, 2, 1, 1, 0], &[1.0, 4.0, 0.5, 0.5, 2.0])
        });
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn attention_with_ragged_lengths() {
        let mut r = rng();
        let mut p = Params::default();
        let q = p.add("q", uniform_mat(&mut r, 2, 3, 1.0));
        let m = p.add("m", uniform_mat(&mut r, 8, 3, 1.0));
        let err = check(&p, |t| {
            let (q, m) = (t.param(q), t.param(m));
            let ctx = t.attention(q, m, &[4, 2], 4);
            sum_sq(t, ctx)
        });
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn attention_with_time_major_queries() {
        let mut r = rng();
        let mut p = Params::default();
        let q = p.add("q", uniform_mat(&mut r, 6, 3, 1.0));
        let m = p.add("m", uniform_mat(&mut r, 6, 3, 1.0));
        let err = check(&p, |t| {
            let (q, m) = (t.param(q), t.param(m));
            let ctx = t.attention(q, m, &[3, 1], 3);
            sum_sq(t, ctx)
        });
        assert!(err < 1e-6, "rel err {err}");
        let mut t = Tape::new(&p);
        let (qv, mv) = (t.param(q), t.param(m));
        let ctx = t.attention(qv, mv, &[3, 1], 3);
        let w = t.attention_weights(ctx).unwrap();
        assert!((w.get(1, 0) - 1.0).abs() < 1e-12);
        assert!((w.row(4).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recurrent_cells() {
        let mut r = rng();
        let mut p = Params::default();
        let gru = Gru::new(&mut p, "gru", 3, 4, &mut r);
        let lstm = Lstm::new(&mut p, "lstm", 4, 3, &mut r);
        let sb = p.add("sb", uniform_mat(&mut r, 2, 12, 0.5));
        let xs = uniform_mat(&mut r, 6, 3, 1.0);
        let err = check(&p, |t| {
            let x = t.input(xs.clone());
            let hs = gru.run(t, x, 2);
            let sbv = t.param(sb);
            let ls = lstm.run(t, hs, 2, Some(sbv));
            sum_sq(t, ls)
        });
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn xent_matches_analytic_values() {
        let p = Params::default();
        let mut t = Tape::new(&p);
        let l = t.input(Mat::zeros(1, 6));
        let loss = t.softmax_xent(l, &[3], &[1.0]);
        assert!((t.scalar(loss) - 6f64.ln()).abs() < 1e-12);
        let mut sharp = Mat::zeros(1, 6);
        sharp.data[2] = 1e6;
        let l = t.input(sharp);
        let loss = t.softmax_xent(l, &[2], &[1.0]);
        assert!(t.scalar(loss).abs() < 1e-12);
        let l = t.input(Mat::from_vec(1, 6, vec![0.1, 0.5, -0.2, 0.3, 0.0, 1.0]));
        let one = t.softmax_xent(l, &[4], &[1.0]);
        let two = t.softmax_xent(l, &[4], &[2.0]);
        assert!((2.0 * t.scalar(one) - t.scalar(two)).abs() < 1e-12);
    }
}
