//! Affine map with gradient accumulators.

use crate::error::Result;
use crate::tensor::{Matrix, NodeId, Tape};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Learned affine transform `x * weight + bias` over row-vector features,
/// with gradient accumulators of identical shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearMap {
    pub weight: Matrix,
    pub bias: Matrix,
    #[serde(skip, default = "Matrix::empty_grad")]
    pub weight_grad: Matrix,
    #[serde(skip, default = "Matrix::empty_grad")]
    pub bias_grad: Matrix,
}

impl Matrix {
    fn empty_grad() -> Matrix {
        Matrix::zeros(0, 0)
    }
}

impl LinearMap {
    /// Uniform fan-in initialization in `±sqrt(1/in_dim)`.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        LinearMap {
            weight: Matrix::random(in_dim, out_dim, -bound, bound, rng),
            bias: Matrix::random(1, out_dim, -bound, bound, rng),
            weight_grad: Matrix::zeros(in_dim, out_dim),
            bias_grad: Matrix::zeros(1, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Called after deserialization to restore zeroed accumulators.
    pub fn reset_grads(&mut self) {
        self.weight_grad = Matrix::zeros(self.weight.rows(), self.weight.cols());
        self.bias_grad = Matrix::zeros(1, self.bias.cols());
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.data_mut().fill(0.0);
        self.bias_grad.data_mut().fill(0.0);
    }

    /// Register weight and bias as leaves on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundLinear {
        BoundLinear {
            weight: tape.leaf(self.weight.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }

    /// Add the tape's gradients for this map into the accumulators,
    /// scaled by `factor` (batch averaging happens here).
    pub fn accumulate_grads(&mut self, tape: &Tape, bound: &BoundLinear, factor: f64) -> Result<()> {
        if let Some(g) = tape.grad(bound.weight) {
            self.weight_grad = self.weight_grad.add(&g.scale(factor))?;
        }
        if let Some(g) = tape.grad(bound.bias) {
            self.bias_grad = self.bias_grad.add(&g.scale(factor))?;
        }
        Ok(())
    }

    /// Forward pass outside any tape.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                out[(r, c)] += self.bias[(0, c)];
            }
        }
        Ok(out)
    }
}

/// Tape handles for one [`LinearMap`]'s parameters.
#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: NodeId,
    pub bias: NodeId,
}

impl BoundLinear {
    /// `x * weight + bias` on the tape.
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let prod = tape.matmul(x, self.weight)?;
        tape.add_bias(prod, self.bias)
    }
}
