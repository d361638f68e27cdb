//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list is a valid topological order for gradient propagation. Nodes that do
//! not depend on any trainable input carry `needs_grad = false` and are
//! skipped during the sweep.

use std::sync::Arc;

use super::ops::{axpy, matmul_into, matmul_tn_into, transpose, SparseMatrix};
use super::{ParameterSet, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(String),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    ConcatRows(Var, Var),
    StackRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SparseMul(Arc<SparseMatrix>, Var),
    Relu(Var),
    MeanRows(Var),
    Dot(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    L2NormalizeRows(Var, Vec<f64>),
    LogSumExp(Var),
    Pick(Var, usize),
    SumAll(Var),
    BceWithLogits(Var, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf; `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn mismatch(op: &'static str, a: (usize, usize), b: (usize, usize)) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: vec![a.0, a.1],
        right: vec![b.0, b.1],
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// A leaf; `trainable` leaves receive gradients.
    pub fn input(&mut self, rows: usize, cols: usize, value: Vec<f64>, trainable: bool) -> Result<Var, TensorError> {
        if value.len() != rows * cols {
            return Err(TensorError::BadLength {
                shape: vec![rows, cols],
                len: value.len(),
            });
        }
        Ok(self.push(rows, cols, value, Op::Input, trainable))
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.values().to_vec(), Op::Input, false)
    }

    /// Binds a named parameter; gradients flow back to it through
    /// [`Tape::backward_into`] when the tensor requires grad.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        self.push(
            t.rows(),
            t.cols(),
            t.values().to_vec(),
            Op::Param(name.to_string()),
            t.requires_grad(),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(mismatch("matmul", (m, k), (k2, n)));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a), self.value(b), m, k, n, &mut out);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(m, n, out, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = transpose(self.value(a), r, c);
        let ng = self.ng(a);
        self.push(c, r, out, Op::Transpose(a), ng)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(op, sa, sb));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(r, c, out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (r, c) = self.same_shape("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(r, c, out, Op::Sub(a, b), ng))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(mismatch("add_row", (r, c), self.shape(row)));
        }
        let bias = self.value(row).to_vec();
        let mut out = self.value(a).to_vec();
        for chunk in out.chunks_mut(c.max(1)) {
            for (o, b) in chunk.iter_mut().zip(&bias) {
                *o += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(r, c, out, Op::AddRow(a, row), ng))
    }

    /// Joins matching rows side by side: row `i` of the result is
    /// `[a_i, b_i]`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(mismatch("concat_rows", (ra, ca), (rb, cb)));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&self.value(a)[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&self.value(b)[i * cb..(i + 1) * cb]);
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(ra, ca + cb, out, Op::ConcatRows(a, b), ng))
    }

    /// Stacks inputs vertically; all must have the same width.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::BadLength {
                shape: vec![0, 0],
                len: 0,
            });
        };
        let c = self.shape(first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, pc) = self.shape(p);
            if pc != c {
                return Err(mismatch("stack_rows", self.shape(first), (r, pc)));
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(rows, c, out, Op::StackRows(parts.to_vec()), ng))
    }

    /// Row lookup: output row `i` is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= r {
                return Err(TensorError::IndexOutOfRange { index: i, len: r });
            }
            out.extend_from_slice(&self.value(a)[i * c..(i + 1) * c]);
        }
        let ng = self.ng(a);
        Ok(self.push(index.len(), c, out, Op::GatherRows(a, index.to_vec()), ng))
    }

    /// `s * a` for a constant sparse `s`.
    pub fn sparse_mul(&mut self, s: Arc<SparseMatrix>, a: Var) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        if s.cols() != r {
            return Err(mismatch("sparse_mul", (s.rows(), s.cols()), (r, c)));
        }
        let mut out = vec![0.0; s.rows() * c];
        s.mul_acc(self.value(a), c, &mut out);
        let ng = self.ng(a);
        let rows = s.rows();
        Ok(self.push(rows, c, out, Op::SparseMul(s, a), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        let ng = self.ng(a);
        self.push(r, c, out, Op::Relu(a), ng)
    }

    /// Column-wise mean, `r x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        if r == 0 {
            return Err(TensorError::BadLength {
                shape: vec![0, c],
                len: 0,
            });
        }
        let mut out = vec![0.0; c];
        for chunk in self.value(a).chunks(c.max(1)) {
            for (o, x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let ng = self.ng(a);
        Ok(self.push(1, c, out, Op::MeanRows(a), ng))
    }

    /// Sum of elementwise products, as a `1 x 1` node.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("dot", a, b)?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(1, 1, vec![v], Op::Dot(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * k).collect();
        let ng = self.ng(a);
        self.push(r, c, out, Op::Scale(a, k), ng)
    }

    /// Multiplies `a` by the `1 x 1` node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        if self.shape(s) != (1, 1) {
            return Err(mismatch("scale_by", self.shape(a), self.shape(s)));
        }
        let k = self.scalar(s);
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * k).collect();
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(r, c, out, Op::ScaleBy(a, s), ng))
    }

    /// Scales each row to unit Euclidean norm; all-zero rows stay zero.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        let mut norms = Vec::with_capacity(r);
        for row in out.chunks_mut(c.max(1)) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in row.iter_mut() {
                    *x /= norm;
                }
            }
            norms.push(norm);
        }
        let ng = self.ng(a);
        self.push(r, c, out, Op::L2NormalizeRows(a, norms), ng)
    }

    /// `ln Σ exp(a_ij)` over all entries, computed with the max shift.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let vals = self.value(a);
        let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = if m.is_finite() {
            m + vals.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        } else {
            m
        };
        let ng = self.ng(a);
        self.push(1, 1, vec![v], Op::LogSumExp(a), ng)
    }

    /// Entry `(row, col)` of `a` as a `1 x 1` node.
    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        if row >= r || col >= c {
            return Err(TensorError::IndexOutOfRange {
                index: row * c + col,
                len: r * c,
            });
        }
        let flat = row * c + col;
        let v = self.value(a)[flat];
        let ng = self.ng(a);
        Ok(self.push(1, 1, vec![v], Op::Pick(a, flat), ng))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().sum();
        let ng = self.ng(a);
        self.push(1, 1, vec![v], Op::SumAll(a), ng)
    }

    /// Mean binary cross-entropy of logits `z` (`n x 1`) against 0/1 targets.
    pub fn bce_with_logits(&mut self, z: Var, targets: &[f64]) -> Result<Var, TensorError> {
        let (r, c) = self.shape(z);
        if c != 1 || r != targets.len() || r == 0 {
            return Err(mismatch("bce_with_logits", (r, c), (targets.len(), 1)));
        }
        let loss = self
            .value(z)
            .iter()
            .zip(targets)
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / r as f64;
        let ng = self.ng(z);
        Ok(self.push(1, 1, vec![loss], Op::BceWithLogits(z, targets.to_vec()), ng))
    }

    /// Gradients of the scalar `loss` with respect to every leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(TensorError::NotScalar(vec![r, c]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Input | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds the gradient of every bound
    /// parameter into `params`, skipping frozen rows.
    pub fn backward_into(&self, loss: Var, params: &mut ParameterSet) -> Result<(), TensorError> {
        let grads = self.backward(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            let Op::Param(name) = &node.op else {
                continue;
            };
            let Some(g) = grads.get(Var(i)) else {
                continue;
            };
            let t = params.get_mut(name)?;
            let cols = t.cols();
            let frozen = t.frozen_rows().to_vec();
            if let Some(dst) = t.grad_mut() {
                for (k, (d, s)) in dst.iter_mut().zip(g).enumerate() {
                    if frozen.binary_search(&(k / cols.max(1))).is_err() {
                        *d += s;
                    }
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = &self.nodes[v.0];
            if !n.needs_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n.rows * n.cols]);
            f(buf);
        };
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let bt = transpose(bv, k, n);
                    acc(*a, &mut |da| matmul_into(g, &bt, m, n, k, da));
                }
                acc(*b, &mut |db| matmul_tn_into(av, g, m, k, n, db));
            }
            Op::Transpose(a) => {
                let (r, c) = self.shape(*a);
                let gt = transpose(g, c, r);
                acc(*a, &mut |da| axpy(1.0, &gt, da));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |da| axpy(1.0, g, da));
                acc(*b, &mut |db| axpy(1.0, g, db));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |da| axpy(1.0, g, da));
                acc(*b, &mut |db| axpy(-1.0, g, db));
            }
            Op::AddRow(a, row) => {
                let c = node.cols.max(1);
                acc(*a, &mut |da| axpy(1.0, g, da));
                acc(*row, &mut |db| {
                    for chunk in g.chunks(c) {
                        axpy(1.0, chunk, db);
                    }
                });
            }
            Op::ConcatRows(a, b) => {
                let ca = self.shape(*a).1;
                let cb = self.shape(*b).1;
                let w = ca + cb;
                acc(*a, &mut |da| {
                    for (i, row) in da.chunks_mut(ca.max(1)).enumerate().take(node.rows) {
                        axpy(1.0, &g[i * w..i * w + ca], row);
                    }
                });
                acc(*b, &mut |db| {
                    for (i, row) in db.chunks_mut(cb.max(1)).enumerate().take(node.rows) {
                        axpy(1.0, &g[i * w + ca..(i + 1) * w], row);
                    }
                });
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    acc(p, &mut |dp| axpy(1.0, &g[offset..offset + len], dp));
                    offset += len;
                }
            }
            Op::GatherRows(a, index) => {
                let c = node.cols;
                acc(*a, &mut |da| {
                    for (i, &src) in index.iter().enumerate() {
                        axpy(1.0, &g[i * c..(i + 1) * c], &mut da[src * c..(src + 1) * c]);
                    }
                });
            }
            Op::SparseMul(s, a) => {
                let c = node.cols;
                acc(*a, &mut |da| s.mul_t_acc(g, c, da));
            }
            Op::Relu(a) => {
                let out = &node.value;
                acc(*a, &mut |da| {
                    for ((d, gi), o) in da.iter_mut().zip(g).zip(out) {
                        if *o > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::MeanRows(a) => {
                let r = self.shape(*a).0 as f64;
                let c = node.cols.max(1);
                acc(*a, &mut |da| {
                    for row in da.chunks_mut(c) {
                        axpy(1.0 / r, g, row);
                    }
                });
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |da| axpy(g[0], bv, da));
                acc(*b, &mut |db| axpy(g[0], av, db));
            }
            Op::Scale(a, k) => acc(*a, &mut |da| axpy(*k, g, da)),
            Op::ScaleBy(a, s) => {
                let k = self.scalar(*s);
                let av = self.value(*a);
                acc(*a, &mut |da| axpy(k, g, da));
                acc(*s, &mut |ds| ds[0] += g.iter().zip(av).map(|(x, y)| x * y).sum::<f64>());
            }
            Op::L2NormalizeRows(a, norms) => {
                let c = node.cols.max(1);
                let y = &node.value;
                acc(*a, &mut |da| {
                    for (r, &norm) in norms.iter().enumerate() {
                        if norm == 0.0 {
                            continue;
                        }
                        let span = r * c..(r + 1) * c;
                        let (yr, gr) = (&y[span.clone()], &g[span.clone()]);
                        let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, yi), gi) in da[span].iter_mut().zip(yr).zip(gr) {
                            *d += (gi - yi * proj) / norm;
                        }
                    }
                });
            }
            Op::LogSumExp(a) => {
                let lse = node.value[0];
                let av = self.value(*a);
                acc(*a, &mut |da| {
                    for (d, x) in da.iter_mut().zip(av) {
                        *d += g[0] * (x - lse).exp();
                    }
                });
            }
            Op::Pick(a, flat) => acc(*a, &mut |da| da[*flat] += g[0]),
            Op::SumAll(a) => acc(*a, &mut |da| {
                for d in da.iter_mut() {
                    *d += g[0];
                }
            }),
            Op::BceWithLogits(z, targets) => {
                let zv = self.value(*z);
                let n = targets.len() as f64;
                acc(*z, &mut |dz| {
                    for ((d, &x), &t) in dz.iter_mut().zip(zv).zip(targets) {
                        let sig = 1.0 / (1.0 + (-x).exp());
                        *d += g[0] * (sig - t) / n;
                    }
                });
            }
        }
    }
}
