//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the tape; node ids are handed out in
//! creation order, which is already a topological order, so the backward
//! pass is a single reverse sweep.

use std::sync::Arc;

use super::tensor::{gemm_nn, gemm_tn};
use super::{NumericsError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    RepeatRows(Var, usize),
    /// Block-wise left product with a constant square matrix.
    Propagate(Var, Arc<Tensor>),
    MaskMul(Var, Tensor),
    Mean(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Element-wise activation functions available on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`; zero when `var` does not reach the loss.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite(format!(
                "result of {} at node {}",
                op_name(&op),
                self.nodes.len()
            )));
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf: gradients are tracked through it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).sub(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).hadamard(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// Adds the `[1, cols]` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(NumericsError::shape("add_row", xv.shape(), bv.shape()));
        }
        let mut value = xv.clone();
        let b = bv.data().to_vec();
        for r in 0..value.rows() {
            for (o, bb) in value.row_mut(r).iter_mut().zip(&b) {
                *o += bb;
            }
        }
        let ng = self.needs(x) || self.needs(bias);
        self.push(value, Op::AddRow(x, bias), ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, NumericsError> {
        let value = self.value(x).scale(s);
        let ng = self.needs(x);
        self.push(value, Op::Scale(x, s), ng)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = self.value(x).map(|v| v.max(0.0));
        let ng = self.needs(x);
        self.push(value, Op::Relu(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = self.value(x).map(sigmoid);
        let ng = self.needs(x);
        self.push(value, Op::Sigmoid(x), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = self.value(x).map(f64::tanh);
        let ng = self.needs(x);
        self.push(value, Op::Tanh(x), ng)
    }

    pub fn activate(&mut self, x: Var, act: Activation) -> Result<Var, NumericsError> {
        match act {
            Activation::Identity => Ok(x),
            Activation::Relu => self.relu(x),
            Activation::Sigmoid => self.sigmoid(x),
            Activation::Tanh => self.tanh(x),
        }
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_cols(&tensors)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::Concat(parts.to_vec()), ng)
    }

    /// Columns `start..end` of `x`.
    pub fn slice(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let value = self.value(x).slice_cols(start, end)?;
        let ng = self.needs(x);
        self.push(value, Op::Slice(x, start), ng)
    }

    /// Tiles each row of `x` `times` times (row `i` fills rows `i*times..(i+1)*times`).
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var, NumericsError> {
        let value = self.value(x).repeat_rows(times);
        let ng = self.needs(x);
        self.push(value, Op::RepeatRows(x, times), ng)
    }

    /// For `h` made of `B` stacked `[n, f]` blocks, returns the blocks `matrix · h_b`.
    pub fn propagate(&mut self, matrix: &Arc<Tensor>, h: Var) -> Result<Var, NumericsError> {
        let n = matrix.rows();
        let hv = self.value(h);
        if matrix.cols() != n || n == 0 || !hv.rows().is_multiple_of(n) {
            return Err(NumericsError::shape("propagate", matrix.shape(), hv.shape()));
        }
        let f = hv.cols();
        let blocks = hv.rows() / n;
        let mut out = Tensor::zeros(hv.rows(), f);
        for b in 0..blocks {
            let src = &hv.data()[b * n * f..(b + 1) * n * f];
            let dst = &mut out.data_mut()[b * n * f..(b + 1) * n * f];
            gemm_nn(matrix.data(), src, dst, n, n, f);
        }
        let ng = self.needs(h);
        self.push(out, Op::Propagate(h, Arc::clone(matrix)), ng)
    }

    /// Element-wise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, x: Var, mask: Tensor) -> Result<Var, NumericsError> {
        let value = self.value(x).hadamard(&mask)?;
        let ng = self.needs(x);
        self.push(value, Op::MaskMul(x, mask), ng)
    }

    /// Mean over all entries, as a 1×1 tensor.
    pub fn mean(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = Tensor::scalar(self.value(x).mean());
        let ng = self.needs(x);
        self.push(value, Op::Mean(x), ng)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = Tensor::scalar(self.value(x).sum());
        let ng = self.needs(x);
        self.push(value, Op::Sum(x), ng)
    }

    /// Mean squared error between `pred` and `target`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, NumericsError> {
        let diff = self.sub(pred, target)?;
        let sq = self.mul(diff, diff)?;
        self.mean(sq)
    }

    /// Reverse sweep from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(NumericsError::NonScalarLoss {
                rows: shape.0,
                cols: shape.1,
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = g.matmul_nt(self.value(*b))?;
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).matmul_tn(&g)?;
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone())?;
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g)?;
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone())?;
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.scale(-1.0))?;
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.hadamard(self.value(*b))?)?;
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.hadamard(self.value(*a))?)?;
                    }
                }
                Op::AddRow(x, bias) => {
                    if self.needs(*bias) {
                        accumulate(&mut grads, *bias, g.column_sums())?;
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g)?;
                    }
                }
                Op::Scale(x, s) => {
                    accumulate(&mut grads, *x, g.scale(*s))?;
                }
                Op::Relu(x) => {
                    let input = self.value(*x);
                    let mut gx = g;
                    for (gv, &iv) in gx.data_mut().iter_mut().zip(input.data()) {
                        if iv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Sigmoid(x) => {
                    let mut gx = g;
                    for (gv, &y) in gx.data_mut().iter_mut().zip(node.value.data()) {
                        *gv *= y * (1.0 - y);
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Tanh(x) => {
                    let mut gx = g;
                    for (gv, &y) in gx.data_mut().iter_mut().zip(node.value.data()) {
                        *gv *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let width = self.value(*p).cols();
                        if self.needs(*p) {
                            accumulate(&mut grads, *p, g.slice_cols(start, start + width)?)?;
                        }
                        start += width;
                    }
                }
                Op::Slice(x, start) => {
                    let (rows, cols) = self.shape(*x);
                    let width = g.cols();
                    let mut gx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        gx.row_mut(r)[*start..start + width].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::RepeatRows(x, times) => {
                    let (rows, cols) = self.shape(*x);
                    let mut gx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let dst = gx.row_mut(r);
                        for k in 0..*times {
                            for (d, v) in dst.iter_mut().zip(g.row(r * times + k)) {
                                *d += v;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Propagate(h, matrix) => {
                    let n = matrix.rows();
                    let f = g.cols();
                    let blocks = g.rows() / n;
                    let mut gh = Tensor::zeros(g.rows(), f);
                    for b in 0..blocks {
                        let src = &g.data()[b * n * f..(b + 1) * n * f];
                        let dst = &mut gh.data_mut()[b * n * f..(b + 1) * n * f];
                        gemm_tn(matrix.data(), src, dst, n, n, f);
                    }
                    accumulate(&mut grads, *h, gh)?;
                }
                Op::MaskMul(x, mask) => {
                    accumulate(&mut grads, *x, g.hadamard(mask)?)?;
                }
                Op::Mean(x) => {
                    let (rows, cols) = self.shape(*x);
                    let count = (rows * cols).max(1) as f64;
                    accumulate(
                        &mut grads,
                        *x,
                        Tensor::filled(rows, cols, g.data()[0] / count),
                    )?;
                }
                Op::Sum(x) => {
                    let (rows, cols) = self.shape(*x);
                    accumulate(&mut grads, *x, Tensor::filled(rows, cols, g.data()[0]))?;
                }
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) -> Result<(), NumericsError> {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::Scale(..) => "scale",
        Op::Relu(..) => "relu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::Concat(..) => "concat",
        Op::Slice(..) => "slice",
        Op::RepeatRows(..) => "repeat_rows",
        Op::Propagate(..) => "propagate",
        Op::MaskMul(..) => "mask_mul",
        Op::Mean(..) => "mean",
        Op::Sum(..) => "sum",
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
