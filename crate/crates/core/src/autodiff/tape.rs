//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. [`Tape::backward`]
//! walks the record in reverse and returns the gradient of a scalar output
//! with respect to every recorded value that depends on a parameter.
//! Shape errors surface when an operation is recorded, never during backward.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::matrix::{CsrMatrix, Matrix};
use crate::scalar::Scalar;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-column statistics a batch-norm layer normalizes with.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

enum Op<'a, T> {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(&'a CsrMatrix<T>, Var),
    AddBias(Var, Var),
    BroadcastRows(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Log(Var),
    Clamp(Var, T, T),
    RowSoftmax(Var),
    SelectColumn(Var, usize),
    MaskedMean(Var, Rc<[usize]>),
    Mean(Var),
    Dropout(Var, Matrix<T>),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        x_hat: Matrix<T>,
        inv_std: Vec<T>,
        batch: bool,
    },
    RowDot(Var, Rc<[Edge]>),
}

struct Node<'a, T> {
    value: Matrix<T>,
    op: Op<'a, T>,
    tracked: bool,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when no path reached it.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix<T>) -> Matrix<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

/// Operation record. Borrowed sparse operators must outlive the tape.
pub struct Tape<'a, T> {
    nodes: RefCell<Vec<Node<'a, T>>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix<T>, op: Op<'a, T>, tracked: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, tracked });
        Var(nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].tracked
    }

    pub fn value(&self, v: Var) -> Ref<'_, Matrix<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Value of a 1x1 result.
    pub fn item(&self, v: Var) -> T {
        self.value(v).item()
    }

    /// Differentiable leaf.
    pub fn param(&self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn unary(&self, x: Var, value: Matrix<T>, op: Op<'a, T>) -> Var {
        let tracked = self.tracked(x);
        self.push(value, op, tracked)
    }

    fn binary(&self, a: Var, b: Var, value: Matrix<T>, op: Op<'a, T>) -> Var {
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, op, tracked)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(&self.value(b))?;
        Ok(self.binary(a, b, value, Op::MatMul(a, b)))
    }

    /// `sparse · x` for a constant sparse operator.
    pub fn sparse_matmul(&self, sparse: &'a CsrMatrix<T>, x: Var) -> Result<Var> {
        let value = sparse.matmul_dense(&self.value(x))?;
        Ok(self.unary(x, value, Op::SparseMatMul(sparse, x)))
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(bias));
        if bs != (1, xs.1) {
            return Err(shape_err("add_bias", format!("{xs:?} + {bs:?}")));
        }
        let value = {
            let (xv, bv) = (self.value(x), self.value(bias));
            let mut out = xv.clone();
            for r in 0..out.rows() {
                for (o, &b) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                    *o += b;
                }
            }
            out
        };
        Ok(self.binary(x, bias, value, Op::AddBias(x, bias)))
    }

    /// Repeats a `1 x c` row `rows` times.
    pub fn broadcast_rows(&self, x: Var, rows: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if r != 1 {
            return Err(shape_err("broadcast_rows", format!("input has {r} rows")));
        }
        let value = {
            let xv = self.value(x);
            let mut data = Vec::with_capacity(rows * c);
            for _ in 0..rows {
                data.extend_from_slice(xv.as_slice());
            }
            Matrix::from_vec(rows, c, data)?
        };
        Ok(self.unary(x, value, Op::BroadcastRows(x)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(&self.value(b), |x, y| x + y);
        Ok(self.binary(a, b, value, Op::Add(a, b)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(&self.value(b), |x, y| x - y);
        Ok(self.binary(a, b, value, Op::Sub(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(&self.value(b), |x, y| x * y);
        Ok(self.binary(a, b, value, Op::Mul(a, b)))
    }

    pub fn scale(&self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.unary(x, value, Op::Scale(x, c))
    }

    /// `x + c` element-wise.
    pub fn offset(&self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.unary(x, value, Op::Offset(x))
    }

    /// `1 - x` element-wise.
    pub fn one_minus(&self, x: Var) -> Var {
        let neg = self.scale(x, -T::one());
        self.offset(neg, T::one())
    }

    pub fn relu(&self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.unary(x, value, Op::Relu(x))
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.unary(x, value, Op::Sigmoid(x))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self, x: Var) -> Var {
        let value = self.value(x).map(softplus);
        self.unary(x, value, Op::Softplus(x))
    }

    pub fn log(&self, x: Var) -> Var {
        let value = self.value(x).map(T::ln);
        self.unary(x, value, Op::Log(x))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(&self, x: Var, lo: T, hi: T) -> Var {
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        self.unary(x, value, Op::Clamp(x, lo, hi))
    }

    pub fn row_softmax(&self, x: Var) -> Var {
        let value = {
            let xv = self.value(x);
            let mut out = xv.clone();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let mut total = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            out
        };
        self.unary(x, value, Op::RowSoftmax(x))
    }

    /// Column `col` as an `n x 1` matrix.
    pub fn select_column(&self, x: Var, col: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if col >= c {
            return Err(shape_err("select_column", format!("column {col} of {r}x{c}")));
        }
        let value = {
            let xv = self.value(x);
            Matrix::column((0..r).map(|i| xv.get(i, col)).collect())
        };
        Ok(self.unary(x, value, Op::SelectColumn(x, col)))
    }

    /// Mean of the rows `rows` of an `n x 1` column.
    pub fn masked_mean(&self, x: Var, rows: Rc<[usize]>) -> Result<Var> {
        let (r, c) = self.shape(x);
        if c != 1 {
            return Err(shape_err("masked_mean", format!("expected a column, got {r}x{c}")));
        }
        if rows.is_empty() {
            return Err(Error::EmptySet("masked_mean over an empty row set".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(shape_err("masked_mean", format!("row {bad} of {r}")));
        }
        let value = {
            let xv = self.value(x);
            let total: T = rows.iter().map(|&i| xv.get(i, 0)).sum();
            Matrix::scalar(total / T::of_usize(rows.len()))
        };
        Ok(self.unary(x, value, Op::MaskedMean(x, rows)))
    }

    /// Mean of all entries.
    pub fn mean(&self, x: Var) -> Result<Var> {
        let value = {
            let xv = self.value(x);
            if xv.is_empty() {
                return Err(Error::EmptySet("mean of an empty matrix".into()));
            }
            Matrix::scalar(xv.sum() / T::of_usize(xv.len()))
        };
        Ok(self.unary(x, value, Op::Mean(x)))
    }

    /// Inverted dropout with drop probability `p`. `keep` holds one Bernoulli
    /// draw per entry (true = kept); survivors are scaled by `1 / (1 - p)`.
    pub fn dropout(&self, x: Var, p: T, keep: &[bool]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if keep.len() != r * c {
            return Err(shape_err("dropout", format!("{} mask entries for {r}x{c}", keep.len())));
        }
        let scale = T::one() / (T::one() - p);
        let mask = Matrix::from_vec(r, c, keep.iter().map(|&k| if k { scale } else { T::zero() }).collect())?;
        let value = self.value(x).zip_map(&mask, |v, m| v * m);
        Ok(self.unary(x, value, Op::Dropout(x, mask)))
    }

    /// Batch normalization over rows. With `stats = None` the batch's own
    /// (biased) statistics are used and returned; otherwise the given
    /// statistics are treated as constants.
    pub fn batch_norm(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
        stats: Option<&BatchStats<T>>,
    ) -> Result<(Var, BatchStats<T>)> {
        let (r, c) = self.shape(x);
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != (1, c) {
                return Err(shape_err("batch_norm", format!("{name} is {:?}, expected (1, {c})", self.shape(v))));
            }
        }
        let used = match stats {
            Some(s) => {
                if s.mean.len() != c || s.var.len() != c {
                    return Err(shape_err("batch_norm", format!("statistics for {} columns, input has {c}", s.mean.len())));
                }
                s.clone()
            }
            None => {
                if r == 0 {
                    return Err(Error::EmptySet("batch_norm over zero rows".into()));
                }
                let xv = self.value(x);
                let n = T::of_usize(r);
                let mut mean = vec![T::zero(); c];
                for i in 0..r {
                    for (m, &v) in mean.iter_mut().zip(xv.row(i)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![T::zero(); c];
                for i in 0..r {
                    for ((s, &v), &m) in var.iter_mut().zip(xv.row(i)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n);
                BatchStats { mean, var }
            }
        };
        let inv_std: Vec<T> = used.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (x_hat, value) = {
            let xv = self.value(x);
            let (g, b) = (self.value(gamma), self.value(beta));
            let mut x_hat = Matrix::zeros(r, c);
            let mut out = Matrix::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    let h = (xv.get(i, j) - used.mean[j]) * inv_std[j];
                    x_hat.set(i, j, h);
                    out.set(i, j, h * g.get(0, j) + b.get(0, j));
                }
            }
            (x_hat, out)
        };
        let tracked = self.tracked(x) || self.tracked(gamma) || self.tracked(beta);
        let out = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                batch: stats.is_none(),
            },
            tracked,
        );
        Ok((out, used))
    }

    /// Dot products `x_i · x_j` for each pair, as an `|pairs| x 1` column.
    pub fn row_dot(&self, x: Var, pairs: Rc<[Edge]>) -> Result<Var> {
        let r = self.shape(x).0;
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= r || j >= r) {
            return Err(shape_err("row_dot", format!("pair ({i}, {j}) with {r} rows")));
        }
        let value = {
            let xv = self.value(x);
            Matrix::column(
                pairs
                    .iter()
                    .map(|&(i, j)| xv.row(i).iter().zip(xv.row(j)).map(|(&a, &b)| a * b).sum())
                    .collect(),
            )
        };
        Ok(self.unary(x, value, Op::RowDot(x, pairs)))
    }

    /// Gradient of the `1 x 1` value `output` with respect to every tracked node.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if nodes[output.0].value.shape() != (1, 1) {
            return Err(shape_err("backward", format!("output is {:?}, expected (1, 1)", nodes[output.0].value.shape())));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(T::one()));

        fn acc<T: Scalar>(grads: &mut [Option<Matrix<T>>], nodes: &[Node<'_, T>], v: Var, g: Matrix<T>) {
            if !nodes[v.0].tracked {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            if !node.tracked {
                continue;
            }
            let value = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if nodes[a.0].tracked {
                        acc(&mut grads, &nodes, *a, g.matmul_t(&nodes[b.0].value)?);
                    }
                    if nodes[b.0].tracked {
                        acc(&mut grads, &nodes, *b, nodes[a.0].value.t_matmul(&g)?);
                    }
                }
                Op::SparseMatMul(s, x) => acc(&mut grads, &nodes, *x, s.t_matmul_dense(&g)?),
                Op::AddBias(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, &nodes, *b, gb);
                    acc(&mut grads, &nodes, *x, g);
                }
                Op::BroadcastRows(x) => {
                    let mut gx = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gx.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, &nodes, *a, g.clone());
                    acc(&mut grads, &nodes, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, &nodes, *b, g.map(|v| -v));
                    acc(&mut grads, &nodes, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(&nodes[b.0].value, |u, v| u * v);
                    let gb = g.zip_map(&nodes[a.0].value, |u, v| u * v);
                    acc(&mut grads, &nodes, *a, ga);
                    acc(&mut grads, &nodes, *b, gb);
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    acc(&mut grads, &nodes, *x, g.map(|v| v * c));
                }
                Op::Offset(x) => acc(&mut grads, &nodes, *x, g),
                Op::Relu(x) => {
                    let gx = g.zip_map(&nodes[x.0].value, |u, v| if v > T::zero() { u } else { T::zero() });
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(value, |u, y| u * y * (T::one() - y));
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::Softplus(x) => {
                    let gx = g.zip_map(&nodes[x.0].value, |u, v| u * sigmoid(v));
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::Log(x) => {
                    let gx = g.zip_map(&nodes[x.0].value, |u, v| u / v);
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::Clamp(x, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let gx = g.zip_map(&nodes[x.0].value, |u, v| if v > lo && v < hi { u } else { T::zero() });
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::RowSoftmax(x) => {
                    let mut gx = g.clone();
                    for r in 0..g.rows() {
                        let y = value.row(r);
                        let dot: T = g.row(r).iter().zip(y).map(|(&a, &b)| a * b).sum();
                        for ((o, &gu), &yv) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(y) {
                            *o = yv * (gu - dot);
                        }
                    }
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::SelectColumn(x, col) => {
                    let (r, c) = nodes[x.0].value.shape();
                    let mut gx = Matrix::zeros(r, c);
                    for i in 0..r {
                        gx.set(i, *col, g.get(i, 0));
                    }
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::MaskedMean(x, rows) => {
                    let r = nodes[x.0].value.rows();
                    let share = g.item() / T::of_usize(rows.len());
                    let mut gx = Matrix::zeros(r, 1);
                    for &i in rows.iter() {
                        gx.as_mut_slice()[i] += share;
                    }
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::Mean(x) => {
                    let (r, c) = nodes[x.0].value.shape();
                    let share = g.item() / T::of_usize(r * c);
                    acc(&mut grads, &nodes, *x, Matrix::filled(r, c, share));
                }
                Op::Dropout(x, mask) => acc(&mut grads, &nodes, *x, g.zip_map(mask, |u, m| u * m)),
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    x_hat,
                    inv_std,
                    batch,
                } => {
                    let (r, c) = g.shape();
                    let mut g_gamma = Matrix::zeros(1, c);
                    let mut g_beta = Matrix::zeros(1, c);
                    for i in 0..r {
                        for j in 0..c {
                            let gu = g.get(i, j);
                            g_gamma.as_mut_slice()[j] += gu * x_hat.get(i, j);
                            g_beta.as_mut_slice()[j] += gu;
                        }
                    }
                    if nodes[x.0].tracked {
                        let gam = &nodes[gamma.0].value;
                        let mut gx = Matrix::zeros(r, c);
                        if *batch {
                            // dx = inv_std / n * (n*dxh - Σdxh - x̂ Σ(dxh x̂)), dxh = g*gamma
                            let n = T::of_usize(r);
                            for j in 0..c {
                                let gj = gam.get(0, j);
                                let sum_dxh = g_beta.as_slice()[j] * gj;
                                let sum_dxh_xh = g_gamma.as_slice()[j] * gj;
                                for i in 0..r {
                                    let dxh = g.get(i, j) * gj;
                                    gx.set(
                                        i,
                                        j,
                                        inv_std[j] / n * (n * dxh - sum_dxh - x_hat.get(i, j) * sum_dxh_xh),
                                    );
                                }
                            }
                        } else {
                            for i in 0..r {
                                for j in 0..c {
                                    gx.set(i, j, g.get(i, j) * gam.get(0, j) * inv_std[j]);
                                }
                            }
                        }
                        acc(&mut grads, &nodes, *x, gx);
                    }
                    acc(&mut grads, &nodes, *gamma, g_gamma);
                    acc(&mut grads, &nodes, *beta, g_beta);
                }
                Op::RowDot(x, pairs) => {
                    let xv = &nodes[x.0].value;
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for (e, &(i, j)) in pairs.iter().enumerate() {
                        let ge = g.get(e, 0);
                        for k in 0..xv.cols() {
                            let (xi, xj) = (xv.get(i, k), xv.get(j, k));
                            gx.row_mut(i)[k] += ge * xj;
                            gx.row_mut(j)[k] += ge * xi;
                        }
                    }
                    acc(&mut grads, &nodes, *x, gx);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
