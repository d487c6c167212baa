//! Append-only tape of dense matrix operations with reverse-mode gradients.
//!
//! Every op checks shapes up front and rejects non-finite results, so a NaN
//! surfaces at the op that produced it rather than in the optimizer.

use std::sync::Arc;

use super::params::{Gradients, ParamStore};
use super::Matrix;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

impl Tensor {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Smallest norm accepted by [`Tape::cosine_similarity`].
pub const COSINE_EPS: f64 = 1e-12;

enum Op {
    Constant,
    Leaf,
    Param(usize),
    MatMul(Tensor, Tensor),
    SpMM(Arc<NormalizedAdjacency>, Tensor),
    AddBias(Tensor, Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    Tanh(Tensor),
    Sigmoid(Tensor),
    Relu(Tensor),
    ConcatCols(Tensor, Tensor),
    RowMean(Tensor),
    ColMax(Tensor, Vec<usize>),
    GatherRows(Tensor, Vec<usize>),
    ScaleRows(Tensor, Tensor),
    Sum(Tensor),
    Cosine {
        a: Tensor,
        b: Tensor,
        norm_a: f64,
        norm_b: f64,
    },
    Clamp(Tensor, f64, f64),
    Bce(Tensor, f64),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_count: Option<usize>,
}

/// Result of a backward pass: gradients for every recorded node plus per-parameter sums.
pub struct Backward {
    nodes: Vec<Option<Matrix>>,
    params: Gradients,
}

impl Backward {
    pub fn wrt(&self, t: Tensor) -> Option<&Matrix> {
        self.nodes.get(t.0).and_then(Option::as_ref)
    }

    pub fn params(&self) -> &Gradients {
        &self.params
    }

    pub fn into_params(self) -> Gradients {
        self.params
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

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        self.nodes[t.0].value.shape()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Value of a `1×1` tensor.
    pub fn scalar(&self, t: Tensor) -> Result<f64> {
        let v = self.value(t);
        if v.shape() != (1, 1) {
            return Err(Error::dim("scalar", v.shape(), (1, 1)));
        }
        Ok(v.data()[0])
    }

    fn push(
        &mut self,
        value: Matrix,
        op: Op,
        requires_grad: bool,
        name: &'static str,
    ) -> Result<Tensor> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Tensor(self.nodes.len() - 1))
    }

    fn rg(&self, ts: &[Tensor]) -> bool {
        ts.iter().any(|t| self.nodes[t.0].requires_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> Result<Tensor> {
        self.push(value, Op::Constant, false, "constant")
    }

    /// A free differentiable input not tied to a parameter store.
    pub fn leaf(&mut self, value: Matrix) -> Result<Tensor> {
        self.push(value, Op::Leaf, true, "leaf")
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Tensor> {
        let idx = store.index_of(name)?;
        match self.param_count {
            None => self.param_count = Some(store.len()),
            Some(n) if n != store.len() => {
                return Err(Error::Usage("one tape cannot mix parameter stores".into()))
            }
            Some(_) => {}
        }
        self.push(store.value(idx).clone(), Op::Param(idx), true, "param")
    }

    pub fn matmul(&mut self, x: Tensor, w: Tensor) -> Result<Tensor> {
        let v = self.value(x).matmul(self.value(w))?;
        let rg = self.rg(&[x, w]);
        self.push(v, Op::MatMul(x, w), rg, "matmul")
    }

    pub fn spmm(&mut self, a: &Arc<NormalizedAdjacency>, h: Tensor) -> Result<Tensor> {
        let v = a.spmm(self.value(h))?;
        let rg = self.rg(&[h]);
        self.push(v, Op::SpMM(Arc::clone(a), h), rg, "spmm")
    }

    /// Adds a `1×n` bias to every row of `x`.
    pub fn add_bias(&mut self, x: Tensor, b: Tensor) -> Result<Tensor> {
        let (xs, bs) = (self.shape(x), self.shape(b));
        if bs != (1, xs.1) {
            return Err(Error::dim("add_bias", xs, bs));
        }
        let mut v = self.value(x).clone();
        let bias = self.value(b).data().to_vec();
        for i in 0..xs.0 {
            for (o, c) in v.row_mut(i).iter_mut().zip(&bias) {
                *o += c;
            }
        }
        let rg = self.rg(&[x, b]);
        self.push(v, Op::AddBias(x, b), rg, "add_bias")
    }

    fn zip_same(
        &self,
        op: &'static str,
        a: Tensor,
        b: Tensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim(op, va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Matrix::from_vec(va.rows(), va.cols(), data)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let v = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let v = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Sub(a, b), rg, "sub")
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let v = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, x: Tensor, factor: f64) -> Result<Tensor> {
        let v = self.value(x).map(|e| e * factor);
        let rg = self.rg(&[x]);
        self.push(v, Op::Scale(x, factor), rg, "scale")
    }

    pub fn tanh(&mut self, x: Tensor) -> Result<Tensor> {
        let v = self.value(x).map(f64::tanh);
        let rg = self.rg(&[x]);
        self.push(v, Op::Tanh(x), rg, "tanh")
    }

    pub fn sigmoid(&mut self, x: Tensor) -> Result<Tensor> {
        let v = self.value(x).map(sigmoid);
        let rg = self.rg(&[x]);
        self.push(v, Op::Sigmoid(x), rg, "sigmoid")
    }

    pub fn relu(&mut self, x: Tensor) -> Result<Tensor> {
        let v = self.value(x).map(|e| e.max(0.0));
        let rg = self.rg(&[x]);
        self.push(v, Op::Relu(x), rg, "relu")
    }

    pub fn concat_cols(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Error::dim("concat_cols", va.shape(), vb.shape()));
        }
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for i in 0..va.rows() {
            data.extend_from_slice(va.row(i));
            data.extend_from_slice(vb.row(i));
        }
        let v = Matrix::from_vec(va.rows(), va.cols() + vb.cols(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::ConcatCols(a, b), rg, "concat_cols")
    }

    /// Column-wise mean: `N×d -> 1×d`.
    pub fn row_mean(&mut self, x: Tensor) -> Result<Tensor> {
        let vx = self.value(x);
        if vx.rows() == 0 {
            return Err(Error::dim("row_mean", vx.shape(), (1, vx.cols())));
        }
        let mut out = vec![0.0; vx.cols()];
        for i in 0..vx.rows() {
            for (o, &e) in out.iter_mut().zip(vx.row(i)) {
                *o += e;
            }
        }
        let n = vx.rows() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let rg = self.rg(&[x]);
        self.push(Matrix::row_vector(&out), Op::RowMean(x), rg, "row_mean")
    }

    /// Column-wise max: `N×d -> 1×d`. Gradient goes to the first maximizing row.
    pub fn col_max(&mut self, x: Tensor) -> Result<Tensor> {
        let vx = self.value(x);
        if vx.rows() == 0 {
            return Err(Error::dim("col_max", vx.shape(), (1, vx.cols())));
        }
        let mut arg = vec![0usize; vx.cols()];
        let mut best = vx.row(0).to_vec();
        for i in 1..vx.rows() {
            for (j, &e) in vx.row(i).iter().enumerate() {
                if e > best[j] {
                    best[j] = e;
                    arg[j] = i;
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(Matrix::row_vector(&best), Op::ColMax(x, arg), rg, "col_max")
    }

    pub fn gather_rows(&mut self, x: Tensor, idx: &[usize]) -> Result<Tensor> {
        let vx = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= vx.rows()) {
            return Err(Error::dim("gather_rows", vx.shape(), (bad, 0)));
        }
        let v = vx.select_rows(idx);
        let rg = self.rg(&[x]);
        self.push(v, Op::GatherRows(x, idx.to_vec()), rg, "gather_rows")
    }

    /// Multiplies row `i` of `x` by `s[i]` (`s` is `N×1`).
    pub fn scale_rows(&mut self, x: Tensor, s: Tensor) -> Result<Tensor> {
        let (vx, vs) = (self.value(x), self.value(s));
        if vs.shape() != (vx.rows(), 1) {
            return Err(Error::dim("scale_rows", vx.shape(), vs.shape()));
        }
        let mut v = vx.clone();
        for i in 0..vx.rows() {
            let f = vs.data()[i];
            v.row_mut(i).iter_mut().for_each(|e| *e *= f);
        }
        let rg = self.rg(&[x, s]);
        self.push(v, Op::ScaleRows(x, s), rg, "scale_rows")
    }

    pub fn sum(&mut self, x: Tensor) -> Result<Tensor> {
        let v = Matrix::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(v, Op::Sum(x), rg, "sum")
    }

    /// `a·bᵀ / (‖a‖‖b‖)` for equally shaped inputs.
    pub fn cosine_similarity(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim("cosine_similarity", va.shape(), vb.shape()));
        }
        let dot: f64 = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).sum();
        let norm_a = va.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_b = vb.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_a <= COSINE_EPS || norm_b <= COSINE_EPS {
            return Err(Error::Numeric(format!(
                "cosine similarity of near-zero vector (norms {norm_a:e}, {norm_b:e})"
            )));
        }
        let c = (dot / (norm_a * norm_b)).clamp(-1.0, 1.0);
        let rg = self.rg(&[a, b]);
        self.push(
            Matrix::scalar(c),
            Op::Cosine {
                a,
                b,
                norm_a,
                norm_b,
            },
            rg,
            "cosine_similarity",
        )
    }

    /// Clamps into `[lo, hi]`; gradient passes only where the input was inside.
    pub fn clamp(&mut self, x: Tensor, lo: f64, hi: f64) -> Result<Tensor> {
        let v = self.value(x).map(|e| e.clamp(lo, hi));
        let rg = self.rg(&[x]);
        self.push(v, Op::Clamp(x, lo, hi), rg, "clamp")
    }

    /// Binary cross-entropy of a `1×1` probability against a 0/1 target.
    pub fn bce(&mut self, p: Tensor, target: f64) -> Result<Tensor> {
        let pv = self.scalar(p)?;
        if !(pv > 0.0 && pv < 1.0) {
            return Err(Error::Numeric(format!("probability {pv} outside (0, 1)")));
        }
        let loss = -(target * pv.ln() + (1.0 - target) * (1.0 - pv).ln());
        let rg = self.rg(&[p]);
        self.push(Matrix::scalar(loss), Op::Bce(p, target), rg, "bce")
    }

    /// Reverse sweep from a `1×1` loss.
    pub fn backward(&self, loss: Tensor) -> Result<Backward> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        let mut params: Vec<Option<Matrix>> = vec![None; self.param_count.unwrap_or(0)];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            match &node.op {
                Op::Constant | Op::Leaf => {}
                Op::Param(p) => acc(&mut params[*p], &g),
                Op::MatMul(x, w) => {
                    if self.requires_grad(*x) {
                        let gx = g.matmul_nt(self.value(*w))?;
                        self.send(&mut grads, *x, gx);
                    }
                    if self.requires_grad(*w) {
                        let gw = self.value(*x).matmul_tn(&g)?;
                        self.send(&mut grads, *w, gw);
                    }
                }
                Op::SpMM(a, h) => {
                    let gh = a.spmm_transpose(&g)?;
                    self.send(&mut grads, *h, gh);
                }
                Op::AddBias(x, b) => {
                    if self.requires_grad(*b) {
                        let mut gb = vec![0.0; g.cols()];
                        for r in 0..g.rows() {
                            for (o, &e) in gb.iter_mut().zip(g.row(r)) {
                                *o += e;
                            }
                        }
                        self.send(&mut grads, *b, Matrix::row_vector(&gb));
                    }
                    self.send(&mut grads, *x, g.clone());
                }
                Op::Add(a, b) => {
                    self.send(&mut grads, *a, g.clone());
                    self.send(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    self.send(&mut grads, *b, g.map(|e| -e));
                    self.send(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(*a) {
                        let ga = hadamard(&g, self.value(*b));
                        self.send(&mut grads, *a, ga);
                    }
                    if self.requires_grad(*b) {
                        let gb = hadamard(&g, self.value(*a));
                        self.send(&mut grads, *b, gb);
                    }
                }
                Op::Scale(x, f) => self.send(&mut grads, *x, g.map(|e| e * f)),
                Op::Tanh(x) => {
                    let gx = zip(&g, &node.value, |e, y| e * (1.0 - y * y));
                    self.send(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let gx = zip(&g, &node.value, |e, y| e * y * (1.0 - y));
                    self.send(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let gx = zip(&g, self.value(*x), |e, v| if v > 0.0 { e } else { 0.0 });
                    self.send(&mut grads, *x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut ga = Vec::with_capacity(g.rows() * ca);
                    let mut gb = Vec::with_capacity(g.rows() * cb);
                    for r in 0..g.rows() {
                        let row = g.row(r);
                        ga.extend_from_slice(&row[..ca]);
                        gb.extend_from_slice(&row[ca..]);
                    }
                    self.send(&mut grads, *a, Matrix::from_vec(g.rows(), ca, ga)?);
                    self.send(&mut grads, *b, Matrix::from_vec(g.rows(), cb, gb)?);
                }
                Op::RowMean(x) => {
                    let (n, d) = self.shape(*x);
                    let mut gx = Matrix::zeros(n, d);
                    let inv = 1.0 / n as f64;
                    for r in 0..n {
                        for (o, &e) in gx.row_mut(r).iter_mut().zip(g.data()) {
                            *o = e * inv;
                        }
                    }
                    self.send(&mut grads, *x, gx);
                }
                Op::ColMax(x, arg) => {
                    let (n, d) = self.shape(*x);
                    let mut gx = Matrix::zeros(n, d);
                    for (j, &r) in arg.iter().enumerate() {
                        gx.set(r, j, g.data()[j]);
                    }
                    self.send(&mut grads, *x, gx);
                }
                Op::GatherRows(x, idx) => {
                    let (n, d) = self.shape(*x);
                    let mut gx = Matrix::zeros(n, d);
                    for (r, &src) in idx.iter().enumerate() {
                        for (o, &e) in gx.row_mut(src).iter_mut().zip(g.row(r)) {
                            *o += e;
                        }
                    }
                    self.send(&mut grads, *x, gx);
                }
                Op::ScaleRows(x, s) => {
                    let vx = self.value(*x);
                    let vs = self.value(*s);
                    if self.requires_grad(*s) {
                        let gs: Vec<f64> = (0..vx.rows())
                            .map(|r| g.row(r).iter().zip(vx.row(r)).map(|(a, b)| a * b).sum())
                            .collect();
                        self.send(&mut grads, *s, Matrix::from_vec(vx.rows(), 1, gs)?);
                    }
                    if self.requires_grad(*x) {
                        let mut gx = g.clone();
                        for r in 0..gx.rows() {
                            let f = vs.data()[r];
                            gx.row_mut(r).iter_mut().for_each(|e| *e *= f);
                        }
                        self.send(&mut grads, *x, gx);
                    }
                }
                Op::Sum(x) => {
                    let (n, d) = self.shape(*x);
                    self.send(&mut grads, *x, Matrix::filled(n, d, g.data()[0]));
                }
                Op::Cosine {
                    a,
                    b,
                    norm_a,
                    norm_b,
                } => {
                    let c = node.value.data()[0];
                    let up = g.data()[0];
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let inv = 1.0 / (norm_a * norm_b);
                    if self.requires_grad(*a) {
                        let ga = zip(vb, va, |y, x| up * (y * inv - c * x / (norm_a * norm_a)));
                        self.send(&mut grads, *a, ga);
                    }
                    if self.requires_grad(*b) {
                        let gb = zip(va, vb, |x, y| up * (x * inv - c * y / (norm_b * norm_b)));
                        self.send(&mut grads, *b, gb);
                    }
                }
                Op::Clamp(x, lo, hi) => {
                    let gx = zip(&g, self.value(*x), |e, v| {
                        if v >= *lo && v <= *hi {
                            e
                        } else {
                            0.0
                        }
                    });
                    self.send(&mut grads, *x, gx);
                }
                Op::Bce(p, y) => {
                    let pv = self.value(*p).data()[0];
                    let d = -y / pv + (1.0 - y) / (1.0 - pv);
                    self.send(&mut grads, *p, Matrix::scalar(g.data()[0] * d));
                }
            }
            grads[i] = Some(g);
        }
        Ok(Backward {
            nodes: grads,
            params: Gradients { per_param: params },
        })
    }

    fn send(&self, grads: &mut [Option<Matrix>], to: Tensor, g: Matrix) {
        if self.nodes[to.0].requires_grad {
            acc(&mut grads[to.0], &g);
        }
    }

    /// Runs backward and adds the parameter gradients into `store`.
    pub fn backward_into(&self, loss: Tensor, store: &mut ParamStore) -> Result<()> {
        let b = self.backward(loss)?;
        store.accumulate(&b.params, 1.0)
    }
}

fn acc(slot: &mut Option<Matrix>, g: &Matrix) {
    match slot {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g.clone()),
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    zip(a, b, |x, y| x * y)
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("shapes checked at record time")
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
