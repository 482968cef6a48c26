//! Matrix-valued reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. Parents always
//! precede children, so walking the node list backwards is a reverse
//! topological order and each node is visited once.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, Ordering};

use super::matrix::{kernels, Matrix};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    LeakyRelu(usize, f64),
    Tanh(usize),
    SoftmaxRows(usize),
    SoftmaxCols(usize),
    LnFloor(usize, f64),
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable input; its gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Result<&Matrix> {
        Ok(&self.nodes[self.check(v)?].value)
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v)?;
        if m.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "scalar",
                left: m.shape(),
                right: (1, 1),
            });
        }
        Ok(m.get(0, 0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let out = kernels::matmul(va, vb);
        self.push(out, Op::MatMul(ia, ib), "matmul")
    }

    /// `a · bᵀ`, the layout used for batched dense layers.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.cols() != vb.cols() {
            return Err(shape_err("matmul_t", va, vb));
        }
        let out = kernels::matmul_nt(va, vb);
        self.push(out, Op::MatMulNt(ia, ib), "matmul_t")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.transpose();
        Ok(self.push_unchecked(out, Op::Transpose(ia), self.nodes[ia].requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.same_shape("add", a, b)?;
        let out = zip(&self.nodes[ia].value, &self.nodes[ib].value, |x, y| x + y);
        self.push(out, Op::Add(ia, ib), "add")
    }

    /// Adds the `1 × m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(shape_err("add_row", va, vb));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(vb.as_slice()) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(ia, ib), "add_row")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.same_shape("sub", a, b)?;
        let out = zip(&self.nodes[ia].value, &self.nodes[ib].value, |x, y| x - y);
        self.push(out, Op::Sub(ia, ib), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.same_shape("mul", a, b)?;
        let out = zip(&self.nodes[ia].value, &self.nodes[ib].value, |x, y| x * y);
        self.push(out, Op::Mul(ia, ib), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.map(|x| c * x);
        self.push(out, Op::Scale(ia, c), "scale")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.map(|x| super::leaky_relu(x, slope));
        self.push(out, Op::LeakyRelu(ia, slope), "leaky_relu")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.map(libm::tanh);
        self.push(out, Op::Tanh(ia), "tanh")
    }

    /// Softmax across each row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let mut out = self.nodes[ia].value.clone();
        for r in 0..out.rows() {
            super::softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(ia), "softmax_rows")
    }

    /// Softmax down each column.
    pub fn softmax_cols(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let src = &self.nodes[ia].value;
        let (rows, cols) = src.shape();
        let mut out = src.clone();
        let mut col = vec![0.0; rows];
        for c in 0..cols {
            for (r, slot) in col.iter_mut().enumerate() {
                *slot = src.get(r, c);
            }
            super::softmax_in_place(&mut col);
            for (r, &v) in col.iter().enumerate() {
                out.set(r, c, v);
            }
        }
        self.push(out, Op::SoftmaxCols(ia), "softmax_cols")
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln_floor(&mut self, a: Var, floor: f64) -> Result<Var> {
        if floor.is_nan() || floor <= 0.0 {
            return Err(Error::invalid("ln_floor needs a positive floor"));
        }
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.map(|x| libm::log(x.max(floor)));
        self.push(out, Op::LnFloor(ia, floor), "ln_floor")
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let total = self.nodes[ia].value.sum();
        self.push(Matrix::from_raw(1, 1, vec![total]), Op::Sum(ia), "sum")
    }

    /// Reverse sweep from a `1 × 1` node; returns gradients of every
    /// [`Tape::param`] leaf it depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.check(loss)?;
        let shape = self.nodes[root].value.shape();
        if shape != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=root).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.wants(a) {
                        let da = kernels::matmul_nt(&g, &self.nodes[b].value);
                        accumulate(&mut grads, a, da);
                    }
                    if self.wants(b) {
                        let db = kernels::matmul_tn(&self.nodes[a].value, &g);
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::MatMulNt(a, b) => {
                    if self.wants(a) {
                        let da = kernels::matmul(&g, &self.nodes[b].value);
                        accumulate(&mut grads, a, da);
                    }
                    if self.wants(b) {
                        let db = kernels::matmul_tn(&g, &self.nodes[a].value);
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::Transpose(a) => accumulate(&mut grads, a, g.transpose()),
                Op::Add(a, b) => {
                    if self.wants(b) {
                        accumulate(&mut grads, b, g.clone());
                    }
                    if self.wants(a) {
                        accumulate(&mut grads, a, g);
                    }
                }
                Op::AddRow(a, b) => {
                    if self.wants(b) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, &gv) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                                *d += gv;
                            }
                        }
                        accumulate(&mut grads, b, db);
                    }
                    if self.wants(a) {
                        accumulate(&mut grads, a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.wants(b) {
                        accumulate(&mut grads, b, g.map(|x| -x));
                    }
                    if self.wants(a) {
                        accumulate(&mut grads, a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.wants(a) {
                        let da = zip(&g, &self.nodes[b].value, |gv, bv| gv * bv);
                        accumulate(&mut grads, a, da);
                    }
                    if self.wants(b) {
                        let db = zip(&g, &self.nodes[a].value, |gv, av| gv * av);
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads, a, g.map(|x| c * x)),
                Op::LeakyRelu(a, slope) => {
                    let da = zip(&g, &self.nodes[a].value, |gv, x| {
                        if x >= 0.0 {
                            gv
                        } else {
                            slope * gv
                        }
                    });
                    accumulate(&mut grads, a, da);
                }
                Op::Tanh(a) => {
                    let da = zip(&g, &node.value, |gv, y| gv * (1.0 - y * y));
                    accumulate(&mut grads, a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut da = g;
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let dr = da.row_mut(r);
                        let dot: f64 = dr.iter().zip(yr).map(|(d, s)| d * s).sum();
                        for (d, &s) in dr.iter_mut().zip(yr) {
                            *d = s * (*d - dot);
                        }
                    }
                    accumulate(&mut grads, a, da);
                }
                Op::SoftmaxCols(a) => {
                    let y = &node.value;
                    let (rows, cols) = y.shape();
                    let mut da = g;
                    let mut dots = vec![0.0; cols];
                    for r in 0..rows {
                        for ((dot, d), s) in dots.iter_mut().zip(da.row(r)).zip(y.row(r)) {
                            *dot += d * s;
                        }
                    }
                    for r in 0..rows {
                        let yr = y.row(r);
                        for ((d, &s), dot) in da.row_mut(r).iter_mut().zip(yr).zip(&dots) {
                            *d = s * (*d - dot);
                        }
                    }
                    accumulate(&mut grads, a, da);
                }
                Op::LnFloor(a, floor) => {
                    let da = zip(&g, &self.nodes[a].value, |gv, x| {
                        if x > floor {
                            gv / x
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, a, da);
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[a].value.shape();
                    accumulate(&mut grads, a, Matrix::filled(r, c, g.get(0, 0)));
                }
            }
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::UnknownVar(v.index));
        }
        Ok(v.index)
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() {
            return Err(shape_err(op, va, vb));
        }
        Ok((ia, ib))
    }

    fn push(&mut self, value: Matrix, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = match op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b) => self.wants(a) || self.wants(b),
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Tanh(a)
            | Op::SoftmaxRows(a)
            | Op::SoftmaxCols(a)
            | Op::LnFloor(a, _)
            | Op::Sum(a) => self.wants(a),
        };
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn push_unchecked(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }
}

/// Leaf gradients from one reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    tape: u32,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for a parameter leaf, `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Result<Option<&Matrix>> {
        if v.tape != self.tape || v.index >= self.grads.len() {
            return Err(Error::UnknownVar(v.index));
        }
        Ok(self.grads[v.index].as_ref())
    }

    /// Like [`Gradients::get`] but yields zeros of `shape` for unused leaves.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Result<Matrix> {
        if v.tape != self.tape || v.index >= self.grads.len() {
            return Err(Error::UnknownVar(v.index));
        }
        Ok(self.grads[v.index]
            .take()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1)))
    }
}

/// Gradients of `loss` with respect to every parameter leaf of `tape`.
pub fn grad(tape: &Tape, loss: Var) -> Result<Gradients> {
    tape.backward(loss)
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::from_raw(a.rows(), a.cols(), data)
}

fn accumulate(grads: &mut [Option<Matrix>], i: usize, g: Matrix) {
    match &mut grads[i] {
        Some(acc) => {
            for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
