//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! The forward pass records every operation on a linear tape as an
//! explicit [`Op`] value (no closures), so a tape can be inspected
//! after the fact. [`Tape::backward`] walks the tape in reverse and
//! accumulates adjoints; parents always precede children, which makes
//! the single reverse sweep correct.
//!
//! A tape is single-writer: build it and run backward on one thread.
//! Independent tapes can run on as many threads as you like.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Handle to a node on a tape. Plain index; only meaningful together
/// with the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// A recorded operation together with its input nodes.
#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Hadamard product.
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    /// Row-wise softmax (max-subtracted).
    SoftmaxRow(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    /// Matrix plus a 1-by-cols bias row added to every row.
    AddRowBias(Var, Var),
    /// Elementwise multiply by a caller-supplied mask. The mask is data,
    /// not a differentiable input.
    Dropout(Var, Matrix),
    /// Sum of all entries, a 1x1 result.
    Sum(Var),
    /// ln(max(x, 1e-12)) entrywise.
    LogClamped(Var),
    ColMean(Var),
    ColMax(Var, Vec<usize>),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records a forward computation for one backward sweep.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

const LOG_CLAMP: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    /// Registers an input. Leaves are both parameters and constants; the
    /// caller decides which gradients it cares about.
    pub fn leaf(&self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> Matrix {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    pub fn op(&self, v: Var) -> Op {
        self.nodes.borrow()[v.0].op.clone()
    }

    fn with_value<R>(&self, v: Var, f: impl FnOnce(&Matrix) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.matmul(&nodes[b.0].value)?
        };
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip_map(&nodes[b.0].value, |x, y| x + y)?
        };
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip_map(&nodes[b.0].value, |x, y| x - y)?
        };
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip_map(&nodes[b.0].value, |x, y| x * y)?
        };
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let value = self.with_value(a, |m| m.scale(c));
        self.push(value, Op::Scale(a, c))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = self.with_value(a, |m| m.map(f64::tanh));
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let value = self.with_value(a, |m| m.map(sigmoid));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        let value = self.with_value(a, |m| m.map(|x| x.max(0.0)));
        self.push(value, Op::Relu(a))
    }

    pub fn softmax_row(&self, a: Var) -> Result<Var> {
        let value = self.with_value(a, |m| m.softmax_rows())?;
        Ok(self.push(value, Op::SoftmaxRow(a)))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let mats: Vec<&Matrix> = parts.iter().map(|v| &nodes[v.0].value).collect();
            Matrix::concat_rows(&mats)?
        };
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let mats: Vec<&Matrix> = parts.iter().map(|v| &nodes[v.0].value).collect();
            Matrix::concat_cols(&mats)?
        };
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = self.with_value(a, |m| m.transpose());
        self.push(value, Op::Transpose(a))
    }

    pub fn add_row_bias(&self, a: Var, bias: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.add_row_bias(&nodes[bias.0].value)?
        };
        Ok(self.push(value, Op::AddRowBias(a, bias)))
    }

    /// Applies a dropout mask drawn by the caller. Evaluation-mode code
    /// simply does not insert this op.
    pub fn dropout(&self, a: Var, mask: &Matrix) -> Result<Var> {
        let value = self.with_value(a, |m| m.zip_map(mask, |x, y| x * y))?;
        Ok(self.push(value, Op::Dropout(a, mask.clone())))
    }

    pub fn sum(&self, a: Var) -> Var {
        let value = self.with_value(a, |m| Matrix::row(vec![m.sum()]));
        self.push(value, Op::Sum(a))
    }

    pub fn log_clamped(&self, a: Var) -> Var {
        let value = self.with_value(a, |m| m.map(|x| x.max(LOG_CLAMP).ln()));
        self.push(value, Op::LogClamped(a))
    }

    pub fn col_mean(&self, a: Var) -> Result<Var> {
        let value = self.with_value(a, |m| m.col_mean())?;
        Ok(self.push(value, Op::ColMean(a)))
    }

    pub fn col_max(&self, a: Var) -> Result<Var> {
        let (value, arg) = self.with_value(a, |m| m.col_max())?;
        Ok(self.push(value, Op::ColMax(a, arg)))
    }

    /// Reverse sweep from a scalar loss. Every node reachable from the
    /// loss gets its adjoint; unreachable nodes keep a zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.0].value.shape();
        if loss_shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                loss_shape.0, loss_shape.1
            )));
        }

        let mut grads: Vec<Matrix> = nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0].set(0, 0, 1.0);

        for i in (0..nodes.len()).rev() {
            // Parents always have smaller indices, so split once and
            // borrow the output gradient from the tail.
            let (head, tail) = grads.split_at_mut(i);
            let go = &tail[0];
            match &nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let av = &nodes[a.0].value;
                    let bv = &nodes[b.0].value;
                    head[a.0].add_assign(&go.matmul(&bv.transpose())?)?;
                    head[b.0].add_assign(&av.transpose().matmul(go)?)?;
                }
                Op::Add(a, b) => {
                    head[a.0].add_assign(go)?;
                    head[b.0].add_assign(go)?;
                }
                Op::Sub(a, b) => {
                    head[a.0].add_assign(go)?;
                    head[b.0].add_assign(&go.scale(-1.0))?;
                }
                Op::Mul(a, b) => {
                    let av = &nodes[a.0].value;
                    let bv = &nodes[b.0].value;
                    head[a.0].add_assign(&go.zip_map(bv, |g, y| g * y)?)?;
                    head[b.0].add_assign(&go.zip_map(av, |g, x| g * x)?)?;
                }
                Op::Scale(a, c) => {
                    head[a.0].add_assign(&go.scale(*c))?;
                }
                Op::Tanh(a) => {
                    let y = &nodes[i].value;
                    head[a.0].add_assign(&go.zip_map(y, |g, t| g * (1.0 - t * t))?)?;
                }
                Op::Sigmoid(a) => {
                    let y = &nodes[i].value;
                    head[a.0].add_assign(&go.zip_map(y, |g, s| g * s * (1.0 - s))?)?;
                }
                Op::Relu(a) => {
                    let x = &nodes[a.0].value;
                    head[a.0].add_assign(&go.zip_map(x, |g, v| if v > 0.0 { g } else { 0.0 })?)?;
                }
                Op::SoftmaxRow(a) => {
                    // Per row: dx_j = p_j * (g_j - sum_k g_k p_k).
                    let p = &nodes[i].value;
                    let mut dx = Matrix::zeros(p.rows(), p.cols());
                    for r in 0..p.rows() {
                        let dot: f64 = (0..p.cols()).map(|j| go.get(r, j) * p.get(r, j)).sum();
                        for j in 0..p.cols() {
                            dx.set(r, j, p.get(r, j) * (go.get(r, j) - dot));
                        }
                    }
                    head[a.0].add_assign(&dx)?;
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for part in parts {
                        let pr = nodes[part.0].value.rows();
                        let cols = nodes[part.0].value.cols();
                        let slice =
                            Matrix::from_fn(pr, cols, |r, c| go.get(offset + r, c));
                        head[part.0].add_assign(&slice)?;
                        offset += pr;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for part in parts {
                        let rows = nodes[part.0].value.rows();
                        let pc = nodes[part.0].value.cols();
                        let slice =
                            Matrix::from_fn(rows, pc, |r, c| go.get(r, offset + c));
                        head[part.0].add_assign(&slice)?;
                        offset += pc;
                    }
                }
                Op::Transpose(a) => {
                    head[a.0].add_assign(&go.transpose())?;
                }
                Op::AddRowBias(a, bias) => {
                    head[a.0].add_assign(go)?;
                    let mut db = Matrix::zeros(1, go.cols());
                    for r in 0..go.rows() {
                        for c in 0..go.cols() {
                            db.set(0, c, db.get(0, c) + go.get(r, c));
                        }
                    }
                    head[bias.0].add_assign(&db)?;
                }
                Op::Dropout(a, mask) => {
                    head[a.0].add_assign(&go.zip_map(mask, |g, m| g * m)?)?;
                }
                Op::Sum(a) => {
                    let g = go.get(0, 0);
                    let (r, c) = nodes[a.0].value.shape();
                    head[a.0].add_assign(&Matrix::from_fn(r, c, |_, _| g))?;
                }
                Op::LogClamped(a) => {
                    let x = &nodes[a.0].value;
                    head[a.0].add_assign(&go.zip_map(x, |g, v| {
                        if v > LOG_CLAMP {
                            g / v
                        } else {
                            0.0
                        }
                    })?)?;
                }
                Op::ColMean(a) => {
                    let rows = nodes[a.0].value.rows();
                    let inv = 1.0 / rows as f64;
                    let cols = go.cols();
                    head[a.0].add_assign(&Matrix::from_fn(rows, cols, |_, c| {
                        go.get(0, c) * inv
                    }))?;
                }
                Op::ColMax(a, arg) => {
                    let (r, c) = nodes[a.0].value.shape();
                    let mut dx = Matrix::zeros(r, c);
                    for (j, &winner) in arg.iter().enumerate() {
                        dx.set(winner, j, go.get(0, j));
                    }
                    head[a.0].add_assign(&dx)?;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adjoints produced by one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Matrix {
        &self.grads[v.0]
    }
}
