//! Adam optimizer with a step-count learning-rate halving schedule.

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Halve the learning rate every this many optimizer steps.
    pub lr_halve_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_halve_every: 300_000,
        }
    }
}

/// `lr0 / 2^(iteration / halve_every)` with integer division.
pub fn scheduled_lr(lr0: f64, halve_every: u64, iteration: u64) -> f64 {
    if halve_every == 0 {
        return lr0;
    }
    lr0 / f64::powi(2.0, (iteration / halve_every) as i32)
}

/// First/second moment accumulators plus the global step counter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        AdamState {
            cfg,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        scheduled_lr(self.cfg.lr, self.cfg.lr_halve_every, self.step)
    }

    /// One Adam update over all parameter tensors. `params` and `grads`
    /// must match the shapes this state was created with.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract {
                detail: format!(
                    "adam step over {} params / {} grads, state tracks {}",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != self.m[i].shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    detail: format!(
                        "grad {i} has shape {:?}, state tracks {:?}",
                        g.shape(),
                        self.m[i].shape()
                    ),
                });
            }
            if !g.all_finite() {
                return Err(Error::Numeric {
                    detail: format!("non-finite gradient in tensor {i} at step {}", self.step),
                });
            }
        }
        let lr = self.current_lr();
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..grad.len() {
                let g = grad.data()[k];
                let mk = self.cfg.beta1 * m.data()[k] + (1.0 - self.cfg.beta1) * g;
                let vk = self.cfg.beta2 * v.data()[k] + (1.0 - self.cfg.beta2) * g * g;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let m_hat = mk / bc1;
                let v_hat = vk / bc2;
                param.data_mut()[k] -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        self.step += 1;
        Ok(())
    }
}
