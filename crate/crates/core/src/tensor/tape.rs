//! Reverse-mode automatic differentiation over matrices.
//!
//! A [`Tape`] records a DAG of matrix operations. Values are computed
//! eagerly when a node is recorded, so building an expression *is* its
//! forward pass; [`Tape::backward`] then walks the nodes in reverse
//! insertion order (a valid reverse topological order) and accumulates
//! gradients into every node that depends on a parameter leaf.
//!
//! Every recorded value is checked for finiteness; the first non-finite
//! intermediate aborts construction with [`Error::Numeric`] naming the op.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{DenseMatrix, SparseMatrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation tag of a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    MatMulT,
    SpMM,
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Log,
    Exp,
    Sqrt,
    RowSoftmax,
    RowLogSoftmax,
    RowL2Normalize,
    ReduceMean,
    ReduceSum,
    RowSum,
    ColMean,
    SliceRows,
    Transpose,
    ScalarScale,
    AddScalar,
    DropoutMaskApply,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::MatMulT => "matmul_t",
            OpKind::SpMM => "spmm",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Log => "log",
            OpKind::Exp => "exp",
            OpKind::Sqrt => "sqrt",
            OpKind::RowSoftmax => "row_softmax",
            OpKind::RowLogSoftmax => "row_log_softmax",
            OpKind::RowL2Normalize => "row_l2_normalize",
            OpKind::ReduceMean => "reduce_mean",
            OpKind::ReduceSum => "reduce_sum",
            OpKind::RowSum => "row_sum",
            OpKind::ColMean => "col_mean",
            OpKind::SliceRows => "slice_rows",
            OpKind::Transpose => "transpose",
            OpKind::ScalarScale => "scalar_scale",
            OpKind::AddScalar => "add_scalar",
            OpKind::DropoutMaskApply => "dropout_mask_apply",
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    SpMM(usize, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Log { x: Var, floor: f64 },
    Exp(Var),
    Sqrt(Var),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    RowL2Normalize(Var),
    ReduceMean(Var),
    ReduceSum(Var),
    RowSum(Var),
    ColMean(Var),
    SliceRows(Var, Vec<usize>),
    Transpose(Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Dropout(Var, Vec<f64>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatMulT(..) => OpKind::MatMulT,
            Op::SpMM(..) => OpKind::SpMM,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Log { .. } => OpKind::Log,
            Op::Exp(_) => OpKind::Exp,
            Op::Sqrt(_) => OpKind::Sqrt,
            Op::RowSoftmax(_) => OpKind::RowSoftmax,
            Op::RowLogSoftmax(_) => OpKind::RowLogSoftmax,
            Op::RowL2Normalize(_) => OpKind::RowL2Normalize,
            Op::ReduceMean(_) => OpKind::ReduceMean,
            Op::ReduceSum(_) => OpKind::ReduceSum,
            Op::RowSum(_) => OpKind::RowSum,
            Op::ColMean(_) => OpKind::ColMean,
            Op::SliceRows(..) => OpKind::SliceRows,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Scale(..) => OpKind::ScalarScale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::Dropout(..) => OpKind::DropoutMaskApply,
        }
    }
}

struct Node {
    op: Op,
    value: DenseMatrix,
    requires_grad: bool,
    is_param: bool,
}

/// Records matrix operations for one forward/backward pass.
pub struct Tape<'a> {
    nodes: Vec<Node>,
    sparse: Vec<&'a SparseMatrix>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the root with respect to a parameter leaf; zeros when the
    /// root does not depend on it.
    pub fn wrt(&self, v: Var) -> DenseMatrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }

    /// `None` when no gradient reached the parameter.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads[v.0].as_ref()
    }
}

// Broadcast-aware index of `b` when combined with an `ar x ac` left operand.
#[inline]
fn bcast_index(b: &DenseMatrix, i: usize, j: usize) -> usize {
    let r = if b.rows() == 1 { 0 } else { i };
    let c = if b.cols() == 1 { 0 } else { j };
    r * b.cols() + c
}

// Sums `g` down to the shape of a broadcast operand.
fn reduce_to(g: &DenseMatrix, rows: usize, cols: usize) -> DenseMatrix {
    if g.shape() == (rows, cols) {
        return g.clone();
    }
    let mut out = DenseMatrix::zeros(rows, cols);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let k = bcast_index(&out, i, j);
            out.data_mut()[k] += g.get(i, j);
        }
    }
    out
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            sparse: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: true,
            is_param: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: false,
            is_param: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: DenseMatrix, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric {
                op: op.kind().name(),
            });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            is_param: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v, &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        self.push(Op::MatMulT(a, b), v, &[a, b])
    }

    /// Sparse (constant) times dense.
    pub fn spmm(&mut self, s: &'a SparseMatrix, b: Var) -> Result<Var> {
        let v = s.spmm(self.value(b))?;
        self.sparse.push(s);
        let idx = self.sparse.len() - 1;
        self.push(Op::SpMM(idx, b), v, &[b])
    }

    fn check_bcast(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (br == ar || br == 1) && (bc == ac || bc == 1) {
            Ok(())
        } else {
            Err(Error::dim(op, format!("cannot broadcast {br}x{bc} onto {ar}x{ac}")))
        }
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = av.clone();
        let cols = av.cols();
        for i in 0..av.rows() {
            for j in 0..cols {
                let k = i * cols + j;
                out.data_mut()[k] = f(av.data()[k], bv.data()[bcast_index(bv, i, j)]);
            }
        }
        out
    }

    /// Elementwise sum; `b` may be a row or column vector broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_bcast("add", a, b)?;
        let v = self.binary(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), v, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_bcast("sub", a, b)?;
        let v = self.binary(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), v, &[a, b])
    }

    /// Elementwise product with the same broadcasting rule as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_bcast("mul", a, b)?;
        let v = self.binary(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), v, &[a, b])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|t| if t > 0.0 { t } else { 0.0 });
        self.push(Op::Relu(x), v, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), v, &[x])
    }

    /// Natural log.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.log_floor(x, 0.0)
    }

    /// `ln(max(x, floor))`; entries below the floor get zero gradient.
    pub fn log_floor(&mut self, x: Var, floor: f64) -> Result<Var> {
        let v = self.value(x).map(|t| libm::log(t.max(floor)));
        self.push(Op::Log { x, floor }, v, &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(libm::exp);
        self.push(Op::Exp(x), v, &[x])
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(libm::sqrt);
        self.push(Op::Sqrt(x), v, &[x])
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).row_softmax();
        self.push(Op::RowSoftmax(x), v, &[x])
    }

    pub fn row_log_softmax(&mut self, x: Var) -> Result<Var> {
        let mut v = self.value(x).clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|t| libm::exp(t - max)).sum::<f64>());
            row.iter_mut().for_each(|t| *t -= lse);
        }
        self.push(Op::RowLogSoftmax(x), v, &[x])
    }

    /// Row-wise L2 normalization; zero rows stay zero (see
    /// [`DenseMatrix::row_l2_normalize`]).
    pub fn row_l2_normalize(&mut self, x: Var) -> Result<Var> {
        let (v, _) = self.value(x).row_l2_normalize();
        self.push(Op::RowL2Normalize(x), v, &[x])
    }

    pub fn reduce_mean(&mut self, x: Var) -> Result<Var> {
        let m = self.value(x);
        if m.is_empty() {
            return Err(Error::dim("reduce_mean", "empty input"));
        }
        let v = DenseMatrix::scalar(m.sum() / m.len() as f64);
        self.push(Op::ReduceMean(x), v, &[x])
    }

    pub fn reduce_sum(&mut self, x: Var) -> Result<Var> {
        let v = DenseMatrix::scalar(self.value(x).sum());
        self.push(Op::ReduceSum(x), v, &[x])
    }

    /// `n x c -> n x 1`
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let m = self.value(x);
        let sums = m.row_iter().map(|r| r.iter().sum()).collect();
        let v = DenseMatrix::from_vec(m.rows(), 1, sums)?;
        self.push(Op::RowSum(x), v, &[x])
    }

    /// `n x c -> 1 x c`
    pub fn col_mean(&mut self, x: Var) -> Result<Var> {
        if self.value(x).rows() == 0 {
            return Err(Error::dim("col_mean", "no rows"));
        }
        let v = self.value(x).col_mean();
        self.push(Op::ColMean(x), v, &[x])
    }

    /// Gathers rows by index; indices may repeat.
    pub fn slice_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let n = self.value(x).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::dim("slice_rows", format!("row {bad} out of {n}")));
        }
        let v = self.value(x).select_rows(idx);
        self.push(Op::SliceRows(x, idx.to_vec()), v, &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).transpose();
        self.push(Op::Transpose(x), v, &[x])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let v = self.value(x).scale(s);
        self.push(Op::Scale(x, s), v, &[x])
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Result<Var> {
        let v = self.value(x).map(|t| t + s);
        self.push(Op::AddScalar(x, s), v, &[x])
    }

    /// Inverted dropout: zeroes entries with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`. The mask is drawn once from `rng`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mut v = self.value(x).clone();
        v.data_mut().iter_mut().zip(&mask).for_each(|(t, m)| *t *= m);
        self.push(Op::Dropout(x, mask), v, &[x])
    }

    /// Sum of several scalars weighted by `weights`.
    pub fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for &(w, t) in terms {
            let scaled = self.scale(t, w)?;
            acc = Some(match acc {
                None => scaled,
                Some(a) => self.add(a, scaled)?,
            });
        }
        match acc {
            Some(v) => Ok(v),
            None => Ok(self.constant(DenseMatrix::scalar(0.0))),
        }
    }

    /// Reverse pass from a `1 x 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.shape(root) != (1, 1) {
            let (r, c) = self.shape(root);
            return Err(Error::contract(format!("backward root must be 1x1, got {r}x{c}")));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<DenseMatrix>> = (0..n).map(|_| None).collect();
        let shapes = self.nodes.iter().map(|node| node.value.shape()).collect();
        if !self.nodes[root.0].requires_grad {
            return Ok(Gradients { grads, shapes });
        }
        grads[root.0] = Some(DenseMatrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            if node.is_param {
                grads[i] = Some(g);
            }
        }
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.is_param {
                *slot = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.axpy(1.0, &g),
            slot @ None => *slot = Some(g),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let ga = g.matmul_t(self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let gb = self.value(*a).t_matmul(g)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::MatMulT(a, b) => {
                if self.needs(*a) {
                    let ga = g.matmul(self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let gb = g.t_matmul(self.value(*a))?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::SpMM(s, b) => {
                let gb = self.sparse[*s].t_spmm(g)?;
                self.accumulate(grads, *b, gb);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    let (br, bc) = self.shape(*b);
                    let mut gb = reduce_to(g, br, bc);
                    if sign < 0.0 {
                        gb = gb.scale(-1.0);
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.needs(*a) {
                    let mut ga = g.clone();
                    for i in 0..ga.rows() {
                        for j in 0..ga.cols() {
                            let k = i * ga.cols() + j;
                            ga.data_mut()[k] *= bv.data()[bcast_index(bv, i, j)];
                        }
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let mut prod = g.clone();
                    prod.data_mut().iter_mut().zip(av.data()).for_each(|(t, x)| *t *= x);
                    self.accumulate(grads, *b, reduce_to(&prod, bv.rows(), bv.cols()));
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                gx.data_mut()
                    .iter_mut()
                    .zip(xv.data())
                    .for_each(|(t, &x)| if x <= 0.0 { *t = 0.0 });
                self.accumulate(grads, *x, gx);
            }
            Op::Sigmoid(x) => {
                let mut gx = g.clone();
                gx.data_mut()
                    .iter_mut()
                    .zip(y.data())
                    .for_each(|(t, &s)| *t *= s * (1.0 - s));
                self.accumulate(grads, *x, gx);
            }
            Op::Log { x, floor } => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                gx.data_mut().iter_mut().zip(xv.data()).for_each(|(t, &x)| {
                    *t = if x > *floor { *t / x } else { 0.0 };
                });
                self.accumulate(grads, *x, gx);
            }
            Op::Exp(x) => {
                let mut gx = g.clone();
                gx.data_mut().iter_mut().zip(y.data()).for_each(|(t, &e)| *t *= e);
                self.accumulate(grads, *x, gx);
            }
            Op::Sqrt(x) => {
                let mut gx = g.clone();
                gx.data_mut().iter_mut().zip(y.data()).for_each(|(t, &s)| {
                    *t = if s > 0.0 { *t / (2.0 * s) } else { 0.0 };
                });
                self.accumulate(grads, *x, gx);
            }
            Op::RowSoftmax(x) => {
                let mut gx = g.clone();
                for r in 0..gx.rows() {
                    let yr = y.row(r);
                    let gy: f64 = g.row(r).iter().zip(yr).map(|(a, b)| a * b).sum();
                    gx.row_mut(r)
                        .iter_mut()
                        .zip(yr)
                        .for_each(|(t, &p)| *t = p * (*t - gy));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::RowLogSoftmax(x) => {
                let mut gx = g.clone();
                for r in 0..gx.rows() {
                    let total: f64 = g.row(r).iter().sum();
                    gx.row_mut(r)
                        .iter_mut()
                        .zip(y.row(r))
                        .for_each(|(t, &ls)| *t -= libm::exp(ls) * total);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::RowL2Normalize(x) => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                for r in 0..gx.rows() {
                    let norm = libm::sqrt(xv.row(r).iter().map(|t| t * t).sum::<f64>());
                    let yr = y.row(r);
                    let gy: f64 = g.row(r).iter().zip(yr).map(|(a, b)| a * b).sum();
                    gx.row_mut(r).iter_mut().zip(yr).for_each(|(t, &u)| {
                        *t = if norm > 0.0 { (*t - u * gy) / norm } else { 0.0 };
                    });
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ReduceMean(x) => {
                let (r, c) = self.shape(*x);
                let gx = DenseMatrix::filled(r, c, g.data()[0] / (r * c) as f64);
                self.accumulate(grads, *x, gx);
            }
            Op::ReduceSum(x) => {
                let (r, c) = self.shape(*x);
                self.accumulate(grads, *x, DenseMatrix::filled(r, c, g.data()[0]));
            }
            Op::RowSum(x) => {
                let (r, c) = self.shape(*x);
                let mut gx = DenseMatrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.data()[i];
                    gx.row_mut(i).iter_mut().for_each(|t| *t = gi);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ColMean(x) => {
                let (r, c) = self.shape(*x);
                let mut gx = DenseMatrix::zeros(r, c);
                let inv = 1.0 / r as f64;
                for i in 0..r {
                    gx.row_mut(i)
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(t, &gj)| *t = gj * inv);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SliceRows(x, idx) => {
                let (r, c) = self.shape(*x);
                let mut gx = DenseMatrix::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    gx.row_mut(i).iter_mut().zip(g.row(k)).for_each(|(t, &v)| *t += v);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Transpose(x) => self.accumulate(grads, *x, g.transpose()),
            Op::Scale(x, s) => self.accumulate(grads, *x, g.scale(*s)),
            Op::AddScalar(x, _shift) => self.accumulate(grads, *x, g.clone()),
            Op::Dropout(x, mask) => {
                let mut gx = g.clone();
                gx.data_mut().iter_mut().zip(mask).for_each(|(t, m)| *t *= m);
                self.accumulate(grads, *x, gx);
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Convenience for tests and small examples: a `1 x 1` constant or param.
pub fn scalar_matrix(v: f64) -> DenseMatrix {
    DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
}
