//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! The forward pass pushes primitive operations onto the tape in order; the
//! backward pass replays them in exact reverse, accumulating gradients into
//! every node. Gradients sum across multiple uses of a node; zeroing happens
//! by discarding the tape and recording a fresh one.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Local gradient of a scalar-valued fused operation with respect to its
/// matrix input, evaluated at the recorded input value.
pub type ScalarGradFn = Box<dyn Fn(&Matrix) -> Result<Matrix>>;

enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Transpose { a: NodeId },
    Add { a: NodeId, b: NodeId },
    MulElem { a: NodeId, b: NodeId },
    Scale { a: NodeId, factor: f64 },
    AddBias { a: NodeId, bias: NodeId },
    Relu { a: NodeId },
    RowSoftmax { a: NodeId },
    ConcatCols { a: NodeId, b: NodeId },
    MaxPoolRows { a: NodeId, argmax: Vec<usize> },
    BroadcastRows { a: NodeId },
    Sum { a: NodeId },
    PermuteRows { a: NodeId, perm: Vec<usize> },
    /// Fused scalar op: forward value precomputed by the caller, backward
    /// delegated to a closure producing d(value)/d(input).
    CustomScalar { input: NodeId, name: &'static str, grad: ScalarGradFn },
}

/// Ordered record of primitive operations with per-node values and gradients.
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<Matrix>,
    grads: Vec<Option<Matrix>>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            vals: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    /// Register an input or parameter value; gradients accumulate into it.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value).expect("leaf push cannot fail")
    }

    pub fn value(&self, node: NodeId) -> &Matrix {
        &self.vals[node.0]
    }

    /// Gradient accumulated at `node`; `None` if no gradient flowed to it.
    pub fn grad(&self, node: NodeId) -> Option<&Matrix> {
        self.grads[node.0].as_ref()
    }

    pub fn num_nodes(&self) -> usize {
        self.vals.len()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op_name(&op) });
        }
        let id = NodeId(self.vals.len());
        self.ops.push(op);
        self.vals.push(value);
        self.grads.push(None);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.vals[a.0].matmul(&self.vals[b.0])?;
        self.push(Op::Matmul { a, b }, value)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.vals[a.0].transpose();
        self.push(Op::Transpose { a }, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.vals[a.0].add(&self.vals[b.0])?;
        self.push(Op::Add { a, b }, value)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.vals[a.0].mul_elem(&self.vals[b.0])?;
        self.push(Op::MulElem { a, b }, value)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let value = self.vals[a.0].scale(factor);
        self.push(Op::Scale { a, factor }, value)
    }

    /// Broadcast-add a `1 x C` bias row onto every row of an `N x C` matrix.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, b) = (&self.vals[a.0], &self.vals[bias.0]);
        if b.rows() != 1 || b.cols() != m.cols() {
            return Err(Error::Dimension {
                op: "add_bias",
                detail: format!("matrix {:?} with bias {:?}", m.shape(), b.shape()),
            });
        }
        let mut value = m.clone();
        for r in 0..value.rows() {
            for c in 0..value.cols() {
                value[(r, c)] += b[(0, c)];
            }
        }
        self.push(Op::AddBias { a, bias }, value)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let mut value = self.vals[a.0].clone();
        for v in value.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push(Op::Relu { a }, value)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.vals[a.0].row_softmax()?;
        self.push(Op::RowSoftmax { a }, value)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.vals[a.0].concat_cols(&self.vals[b.0])?;
        self.push(Op::ConcatCols { a, b }, value)
    }

    /// Column-wise max over rows, producing `1 x C`; ties keep the first row.
    pub fn max_pool_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let m = &self.vals[a.0];
        if m.rows() == 0 {
            return Err(Error::Input {
                detail: "max_pool_rows on empty matrix".into(),
            });
        }
        let mut value = Matrix::zeros(1, m.cols());
        let mut argmax = vec![0usize; m.cols()];
        for c in 0..m.cols() {
            let mut best = m[(0, c)];
            let mut best_r = 0;
            for r in 1..m.rows() {
                if m[(r, c)] > best {
                    best = m[(r, c)];
                    best_r = r;
                }
            }
            value[(0, c)] = best;
            argmax[c] = best_r;
        }
        self.push(Op::MaxPoolRows { a, argmax }, value)
    }

    /// Repeat a `1 x C` row `n` times into an `N x C` matrix.
    pub fn broadcast_rows(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        let m = &self.vals[a.0];
        if m.rows() != 1 {
            return Err(Error::Dimension {
                op: "broadcast_rows",
                detail: format!("expected 1 row, got {}", m.rows()),
            });
        }
        let mut value = Matrix::zeros(n, m.cols());
        for r in 0..n {
            value.row_mut(r).copy_from_slice(m.row(0));
        }
        self.push(Op::BroadcastRows { a }, value)
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Matrix::from_vec(1, 1, vec![self.vals[a.0].sum()])?;
        self.push(Op::Sum { a }, value)
    }

    /// Row gather: output row `i` is input row `perm[i]`; `perm` must be a
    /// permutation of `0..rows`.
    pub fn permute_rows(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId> {
        let m = &self.vals[a.0];
        let mut seen = vec![false; m.rows()];
        for &p in perm {
            if p >= m.rows() || seen[p] {
                return Err(Error::Contract {
                    detail: "permute_rows requires a permutation".into(),
                });
            }
            seen[p] = true;
        }
        let value = m.permute_rows(perm)?;
        self.push(
            Op::PermuteRows {
                a,
                perm: perm.to_vec(),
            },
            value,
        )
    }

    /// Mean of all entries as a `1 x 1` node.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.vals[a.0].len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Record a fused scalar-valued operation. `value` is the precomputed
    /// forward result; `grad` maps the recorded input value to
    /// d(value)/d(input) and is invoked once during backward.
    pub fn custom_scalar(
        &mut self,
        input: NodeId,
        name: &'static str,
        value: f64,
        grad: ScalarGradFn,
    ) -> Result<NodeId> {
        let value = Matrix::from_vec(1, 1, vec![value])?;
        self.push(Op::CustomScalar { input, name, grad }, value)
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, node: NodeId) -> Result<f64> {
        let m = &self.vals[node.0];
        if m.shape() != (1, 1) {
            return Err(Error::Contract {
                detail: format!("expected scalar node, got shape {:?}", m.shape()),
            });
        }
        Ok(m[(0, 0)])
    }

    fn accumulate(&mut self, node: NodeId, grad: Matrix) {
        match &mut self.grads[node.0] {
            Some(existing) => {
                let updated = existing.add(&grad).expect("gradient shape mismatch");
                *existing = updated;
            }
            None => self.grads[node.0] = Some(grad),
        }
    }

    /// Reverse sweep from a scalar loss node; fills gradients for every node
    /// the loss depends on. Errails if `loss` is not `1 x 1` or if backward
    /// already ran on this tape.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract {
                detail: "backward already ran on this tape".into(),
            });
        }
        if self.vals[loss.0].shape() != (1, 1) {
            return Err(Error::Contract {
                detail: format!(
                    "backward requires a scalar loss, got shape {:?}",
                    self.vals[loss.0].shape()
                ),
            });
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0])?);

        for idx in (0..self.ops.len()).rev() {
            let Some(upstream) = self.grads[idx].clone() else {
                continue;
            };
            match &self.ops[idx] {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = upstream.matmul(&self.vals[b.0].transpose())?;
                    let db = self.vals[a.0].transpose().matmul(&upstream)?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Transpose { a } => {
                    let a = *a;
                    self.accumulate(a, upstream.transpose());
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, upstream.clone());
                    self.accumulate(b, upstream);
                }
                Op::MulElem { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = upstream.mul_elem(&self.vals[b.0])?;
                    let db = upstream.mul_elem(&self.vals[a.0])?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Scale { a, factor } => {
                    let (a, factor) = (*a, *factor);
                    self.accumulate(a, upstream.scale(factor));
                }
                Op::AddBias { a, bias } => {
                    let (a, bias) = (*a, *bias);
                    let mut db = Matrix::zeros(1, upstream.cols());
                    for r in 0..upstream.rows() {
                        for c in 0..upstream.cols() {
                            db[(0, c)] += upstream[(r, c)];
                        }
                    }
                    self.accumulate(a, upstream);
                    self.accumulate(bias, db);
                }
                Op::Relu { a } => {
                    let a = *a;
                    let mut da = upstream;
                    for (g, &x) in da.data_mut().iter_mut().zip(self.vals[a.0].data().iter()) {
                        if x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::RowSoftmax { a } => {
                    let a = *a;
                    let p = &self.vals[idx];
                    let mut da = Matrix::zeros(p.rows(), p.cols());
                    for r in 0..p.rows() {
                        let dot: f64 = upstream
                            .row(r)
                            .iter()
                            .zip(p.row(r).iter())
                            .map(|(u, q)| u * q)
                            .sum();
                        for c in 0..p.cols() {
                            da[(r, c)] = p[(r, c)] * (upstream[(r, c)] - dot);
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::ConcatCols { a, b } => {
                    let (a, b) = (*a, *b);
                    let left_cols = self.vals[a.0].cols();
                    let right_cols = self.vals[b.0].cols();
                    let mut da = Matrix::zeros(upstream.rows(), left_cols);
                    let mut db = Matrix::zeros(upstream.rows(), right_cols);
                    for r in 0..upstream.rows() {
                        da.row_mut(r).copy_from_slice(&upstream.row(r)[..left_cols]);
                        db.row_mut(r).copy_from_slice(&upstream.row(r)[left_cols..]);
                    }
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::MaxPoolRows { a, argmax } => {
                    let a = *a;
                    let argmax = argmax.clone();
                    let mut da = Matrix::zeros(self.vals[a.0].rows(), self.vals[a.0].cols());
                    for (c, &r) in argmax.iter().enumerate() {
                        da[(r, c)] += upstream[(0, c)];
                    }
                    self.accumulate(a, da);
                }
                Op::BroadcastRows { a } => {
                    let a = *a;
                    let mut da = Matrix::zeros(1, upstream.cols());
                    for r in 0..upstream.rows() {
                        for c in 0..upstream.cols() {
                            da[(0, c)] += upstream[(r, c)];
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::Sum { a } => {
                    let a = *a;
                    let shape = self.vals[a.0].shape();
                    let da = Matrix::filled(shape.0, shape.1, upstream[(0, 0)]);
                    self.accumulate(a, da);
                }
                Op::PermuteRows { a, perm } => {
                    let a = *a;
                    let perm = perm.clone();
                    let mut da = Matrix::zeros(upstream.rows(), upstream.cols());
                    for (i, &src) in perm.iter().enumerate() {
                        for c in 0..upstream.cols() {
                            da[(src, c)] += upstream[(i, c)];
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::CustomScalar { input, grad, name } => {
                    let input = *input;
                    let name = *name;
                    let local = grad(&self.vals[input.0])?;
                    if local.shape() != self.vals[input.0].shape() {
                        return Err(Error::Contract {
                            detail: format!("{name}: local gradient shape mismatch"),
                        });
                    }
                    self.accumulate(input, local.scale(upstream[(0, 0)]));
                }
            }
        }
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Matmul { .. } => "matmul",
        Op::Transpose { .. } => "transpose",
        Op::Add { .. } => "add",
        Op::MulElem { .. } => "mul_elem",
        Op::Scale { .. } => "scale",
        Op::AddBias { .. } => "add_bias",
        Op::Relu { .. } => "relu",
        Op::RowSoftmax { .. } => "row_softmax",
        Op::ConcatCols { .. } => "concat_cols",
        Op::MaxPoolRows { .. } => "max_pool_rows",
        Op::BroadcastRows { .. } => "broadcast_rows",
        Op::Sum { .. } => "sum",
        Op::PermuteRows { .. } => "permute_rows",
        Op::CustomScalar { name, .. } => name,
    }
}
