use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    /// `p ← p − lr·g`
    Sgd,
    /// Bias-corrected adaptive moments.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state for a fixed, ordered list of parameters.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::adam(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Applies one update to every parameter and clears their gradients.
    /// The parameter list must have the same order and shapes on every call.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
            return Err(Error::contract(format!(
                "optimizer step: parameter {i} of shape {:?} has no gradient",
                params[i].shape()
            )));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self
                .first
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.numel())
        {
            return Err(Error::contract(
                "optimizer step: parameter list changed between steps",
            ));
        }
        self.step += 1;
        let lr = self.lr;
        for (i, p) in params.iter_mut().enumerate() {
            let g = p.grad().expect("checked above").to_vec();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, gi) in p.data_mut().iter_mut().zip(&g) {
                        *w -= lr * gi;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let t = self.step as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (j, w) in p.data_mut().iter_mut().enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            p.clear_grad();
        }
        Ok(())
    }
}
