//! Reverse-mode automatic differentiation over dense arrays.
//!
//! A [`Tape`] records every primitive applied during one forward pass. Nodes
//! are appended in evaluation order, so the node list is already a
//! topological order and `backward` simply walks it in reverse.
//!
//! Primitive ops panic on shape mismatches; callers that accept external
//! input validate shapes before recording.

use std::collections::HashMap;

use crate::array::Tensor;
use crate::error::{Result, TensorError};
use crate::params::{Gradients, ParamId, ParamStore};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    SparseMatMulT(Var, Vec<Vec<usize>>),
    MatMulTCols(Var, Var, usize),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Softplus(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Transpose(Var),
    Gather(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    L2NormalizeRows(Var),
    LogSoftmaxRows(Var, Option<Vec<bool>>),
    LogSumExpRows(Var),
    Minimum(Var, Var),
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
}

/// Recorded computation for one forward pass over a borrowed [`ParamStore`].
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    consumed: bool,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape { store, nodes: Vec::new(), params: HashMap::new(), consumed: false }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Value::Owned(value), op });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node { value: Value::Param(id), op: Op::Param(id) });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let id = self.store.require(name)?;
        Ok(self.param(id))
    }

    fn binary_same(&self, a: Var, b: Var, what: &str) -> (Tensor, Tensor) {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "{what}: shape mismatch");
        (x.clone(), y.clone())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (mut x, y) = self.binary_same(a, b, "add");
        x.add_assign(&y);
        self.push(x, Op::Add(a, b))
    }

    /// `a + b` with the `1 × m` row `b` broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let x = self.value(a);
        let bias = self.value(b);
        assert_eq!(bias.rows(), 1, "add_row: bias must be a row vector");
        assert_eq!(x.cols(), bias.cols(), "add_row: width mismatch");
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bias.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (mut x, y) = self.binary_same(a, b, "sub");
        for (p, q) in x.data_mut().iter_mut().zip(y.data()) {
            *p -= q;
        }
        self.push(x, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (mut x, y) = self.binary_same(a, b, "mul");
        for (p, q) in x.data_mut().iter_mut().zip(y.data()) {
            *p *= q;
        }
        self.push(x, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    /// Adds a constant to every element.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::Shift(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    /// `X · Wᵀ` where each row of `X` is a binary vector given by the indices
    /// of its set entries. `W` is `out × in`.
    pub fn sparse_matmul_t(&mut self, w: Var, active: Vec<Vec<usize>>) -> Var {
        let wt = self.value(w);
        let (out_dim, in_dim) = wt.shape();
        let mut out = Tensor::zeros(active.len(), out_dim);
        for (r, idx) in active.iter().enumerate() {
            let row = out.row_mut(r);
            for &i in idx {
                assert!(i < in_dim, "sparse_matmul_t: index {i} out of range {in_dim}");
                for (o, row_val) in row.iter_mut().enumerate() {
                    *row_val += wt.get(o, i);
                }
            }
        }
        self.push(out, Op::SparseMatMulT(w, active))
    }

    /// `x · W[:, offset..offset + k]ᵀ` where `k` is the width of `x`.
    pub fn matmul_t_cols(&mut self, x: Var, w: Var, offset: usize) -> Var {
        let (xt, wt) = (self.value(x), self.value(w));
        let k = xt.cols();
        assert!(offset + k <= wt.cols(), "matmul_t_cols: column block out of range");
        let mut out = Tensor::zeros(xt.rows(), wt.rows());
        for r in 0..xt.rows() {
            let xr = xt.row(r);
            for o in 0..wt.rows() {
                let wr = &wt.row(o)[offset..offset + k];
                out.set(r, o, crate::array::dot(xr, wr));
            }
        }
        self.push(out, Op::MatMulTCols(x, w, offset))
    }

    /// `x · Wᵀ + b` with `W: out × in`, `b: 1 × out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul_t(x, w);
        self.add_row(h, b)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    /// `ln(1 + eˣ)`, computed stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Column sums, `n × m → 1 × m`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(1, t.cols());
        for r in 0..t.rows() {
            for (o, x) in out.data_mut().iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        self.push(out, Op::SumRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows(), rows, "concat_cols: row mismatch");
                out.row_mut(r)[off..off + t.cols()].copy_from_slice(t.row(r));
                off += t.cols();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows: column mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.len(), rows * cols, "reshape: size mismatch");
        let out = Tensor::from_vec(rows, cols, t.data().to_vec());
        self.push(out, Op::Reshape(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Picks elements by flat (row-major) index into a `1 × k` row.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let t = self.value(a);
        let out = Tensor::row_vector(idx.iter().map(|&i| t.data()[i]).collect());
        self.push(out, Op::Gather(a, idx))
    }

    /// Picks rows (indices may repeat, which broadcasts a row).
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * t.cols());
        for &i in &idx {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_vec(idx.len(), t.cols(), data);
        self.push(out, Op::GatherRows(a, idx))
    }

    /// Element `(r, c)` as a `1 × 1` node.
    pub fn element(&mut self, a: Var, r: usize, c: usize) -> Var {
        let cols = self.value(a).cols();
        self.gather(a, vec![r * cols + c])
    }

    /// Diagonal of a square matrix as a `1 × n` row.
    pub fn diag(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(n, m, "diag: matrix is not square");
        self.gather(a, (0..n).map(|i| i * n + i).collect())
    }

    /// Row-wise L2 normalization. All-zero rows map to zero.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                for x in row.iter_mut() {
                    *x /= n;
                }
            }
        }
        self.push(out, Op::L2NormalizeRows(a))
    }

    /// Row-wise log-softmax. `mask` (same length as the array, row-major)
    /// marks allowed entries; masked entries become −∞. Panics if a row has
    /// no allowed entry.
    pub fn log_softmax_rows(&mut self, a: Var, mask: Option<Vec<bool>>) -> Var {
        let t = self.value(a);
        if let Some(m) = &mask {
            assert_eq!(m.len(), t.len(), "log_softmax_rows: mask length mismatch");
        }
        let cols = t.cols();
        let mut out = t.clone();
        for r in 0..out.rows() {
            let allowed = |c: usize| mask.as_ref().is_none_or(|m| m[r * cols + c]);
            let row = out.row_mut(r);
            let lse = logsumexp_masked(row, &allowed).expect("log_softmax_rows: row fully masked");
            for (c, x) in row.iter_mut().enumerate() {
                *x = if allowed(c) { *x - lse } else { f64::NEG_INFINITY };
            }
        }
        self.push(out, Op::LogSoftmaxRows(a, mask))
    }

    /// Row-wise log-sum-exp, `n × m → n × 1`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|r| logsumexp(t.row(r))).collect();
        let out = Tensor::from_vec(t.rows(), 1, data);
        self.push(out, Op::LogSumExpRows(a))
    }

    /// Element-wise minimum; ties send the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let (mut x, y) = self.binary_same(a, b, "minimum");
        for (p, q) in x.data_mut().iter_mut().zip(y.data()) {
            *p = p.min(*q);
        }
        self.push(x, Op::Minimum(a, b))
    }

    pub fn dot_rows(&mut self, a: Var, b: Var) -> Var {
        let m = self.mul(a, b);
        self.sum(m)
    }

    /// Gradients of `sum(seed ⊙ output)` with respect to every parameter
    /// reached from `output`. A tape can be differentiated only once.
    pub fn backward(&mut self, output: Var, seed: &Tensor) -> Result<Gradients> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if self.value(output).shape() != seed.shape() {
            return Err(TensorError::ShapeMismatch("backward seed".into()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed.clone());
        let mut out = Gradients::new();

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(self.store.name(*id), &g),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::AddRow(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate_owned(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate_owned(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, self.value(*b), |g, y| g * y);
                    let gb = zip_map(&g, self.value(*a), |g, x| g * x);
                    accumulate_owned(&mut grads, *a, ga);
                    accumulate_owned(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate_owned(&mut grads, *a, g.map(|x| x * c));
                }
                Op::Shift(a) => accumulate(&mut grads, *a, &g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    accumulate_owned(&mut grads, *a, ga);
                    accumulate_owned(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    accumulate_owned(&mut grads, *a, ga);
                    accumulate_owned(&mut grads, *b, gb);
                }
                Op::SparseMatMulT(w, active) => {
                    let (out_dim, in_dim) = self.value(*w).shape();
                    let mut gw = Tensor::zeros(out_dim, in_dim);
                    for (r, idx) in active.iter().enumerate() {
                        let grow = g.row(r);
                        for &i in idx {
                            for (o, &gv) in grow.iter().enumerate() {
                                let cur = gw.get(o, i);
                                gw.set(o, i, cur + gv);
                            }
                        }
                    }
                    accumulate_owned(&mut grads, *w, gw);
                }
                Op::MatMulTCols(x, w, offset) => {
                    let (xt, wt) = (self.value(*x), self.value(*w));
                    let k = xt.cols();
                    let mut gx = Tensor::zeros(xt.rows(), k);
                    let mut gw = Tensor::zeros(wt.rows(), wt.cols());
                    for r in 0..xt.rows() {
                        for o in 0..wt.rows() {
                            let gv = g.get(r, o);
                            if gv == 0.0 {
                                continue;
                            }
                            let wr = &wt.row(o)[*offset..*offset + k];
                            for (gxv, wv) in gx.row_mut(r).iter_mut().zip(wr) {
                                *gxv += gv * wv;
                            }
                            let xr = xt.row(r);
                            for (gwv, xv) in gw.row_mut(o)[*offset..*offset + k].iter_mut().zip(xr) {
                                *gwv += gv * xv;
                            }
                        }
                    }
                    accumulate_owned(&mut grads, *x, gx);
                    accumulate_owned(&mut grads, *w, gw);
                }
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, self.value(Var(i)), |g, y| g * y * (1.0 - y));
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, self.value(Var(i)), |g, y| g * (1.0 - y * y));
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = zip_map(&g, self.value(Var(i)), |g, y| g * y);
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::Ln(a) => {
                    let ga = zip_map(&g, self.value(*a), |g, x| g / x);
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = zip_map(&g, self.value(*a), |g, x| 2.0 * g * x);
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = zip_map(&g, self.value(*a), |g, x| g * sigmoid(x));
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate_owned(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.shape(*a);
                    let n = (r * c) as f64;
                    accumulate_owned(&mut grads, *a, Tensor::filled(r, c, g.item() / n));
                }
                Op::SumRows(a) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for k in 0..r {
                        ga.row_mut(k).copy_from_slice(g.row(0));
                    }
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let mut gp = Tensor::zeros(r, c);
                        for k in 0..r {
                            gp.row_mut(k).copy_from_slice(&g.row(k)[off..off + c]);
                        }
                        off += c;
                        accumulate_owned(&mut grads, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let gp = Tensor::from_vec(r, c, g.data()[off * c..(off + r) * c].to_vec());
                        off += r;
                        accumulate_owned(&mut grads, p, gp);
                    }
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate_owned(&mut grads, *a, Tensor::from_vec(r, c, g.into_vec()));
                }
                Op::Transpose(a) => accumulate_owned(&mut grads, *a, g.transpose()),
                Op::Gather(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for (k, &j) in idx.iter().enumerate() {
                        ga.data_mut()[j] += g.data()[k];
                    }
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for (k, &j) in idx.iter().enumerate() {
                        for (o, x) in ga.row_mut(j).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::L2NormalizeRows(a) => {
                    let x = self.value(*a);
                    let y = self.value(Var(i));
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let n = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n == 0.0 {
                            continue;
                        }
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, &gv), &yv) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *o = (gv - yv * proj) / n;
                        }
                    }
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a, mask) => {
                    let y = self.value(Var(i));
                    let cols = y.cols();
                    let mut ga = Tensor::zeros(y.rows(), cols);
                    for r in 0..y.rows() {
                        let allowed = |c: usize| mask.as_ref().is_none_or(|m| m[r * cols + c]);
                        let gsum: f64 = (0..cols).filter(|&c| allowed(c)).map(|c| g.get(r, c)).sum();
                        for c in (0..cols).filter(|&c| allowed(c)) {
                            ga.set(r, c, g.get(r, c) - y.get(r, c).exp() * gsum);
                        }
                    }
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::LogSumExpRows(a) => {
                    let x = self.value(*a);
                    let y = self.value(Var(i));
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let (lse, gr) = (y.get(r, 0), g.get(r, 0));
                        for (o, &xv) in ga.row_mut(r).iter_mut().zip(x.row(r)) {
                            *o = gr * (xv - lse).exp();
                        }
                    }
                    accumulate_owned(&mut grads, *a, ga);
                }
                Op::Minimum(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    let mut gb = Tensor::zeros(x.rows(), x.cols());
                    for k in 0..x.len() {
                        if x.data()[k] <= y.data()[k] {
                            ga.data_mut()[k] = g.data()[k];
                        } else {
                            gb.data_mut()[k] = g.data()[k];
                        }
                    }
                    accumulate_owned(&mut grads, *a, ga);
                    accumulate_owned(&mut grads, *b, gb);
                }
            }
        }
        Ok(out)
    }

    /// `backward` seeded with 1 for a scalar output.
    pub fn backward_scalar(&mut self, output: Var) -> Result<Gradients> {
        self.backward(output, &Tensor::scalar(1.0))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: &Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(g),
        slot => *slot = Some(g.clone()),
    }
}

fn accumulate_owned(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Stable `ln Σ eˣ`; −∞ for an empty slice or all −∞ entries.
pub fn logsumexp(xs: &[f64]) -> f64 {
    logsumexp_masked(xs, &|_| true).unwrap_or(f64::NEG_INFINITY)
}

fn logsumexp_masked(xs: &[f64], allowed: &dyn Fn(usize) -> bool) -> Option<f64> {
    let m = xs
        .iter()
        .enumerate()
        .filter(|&(i, _)| allowed(i))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !xs.iter().enumerate().any(|(i, _)| allowed(i)) {
        return None;
    }
    if m == f64::NEG_INFINITY {
        return Some(f64::NEG_INFINITY);
    }
    let s: f64 = xs.iter().enumerate().filter(|&(i, _)| allowed(i)).map(|(_, &x)| (x - m).exp()).sum();
    Some(m + s.ln())
}
