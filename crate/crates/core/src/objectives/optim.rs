use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trainable::{ShapeError, Trainable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("non-finite gradient entry {value} at index {index}; step skipped")]
    NonFinite { index: usize, value: f64 },
}

/// Optimizer state. Every update is a descent step `θ ← θ − lr·update(g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Self {
        let moments = match config.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => num_params,
        };
        OptimizerState {
            config,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. On error nothing is modified.
    pub fn step<P: Trainable + ?Sized>(&mut self, params: &mut P, grad: &[f64]) -> Result<(), OptimError> {
        let mut theta = params.trainable();
        if grad.len() != theta.len() {
            return Err(ShapeError {
                expected: theta.len(),
                got: grad.len(),
            }
            .into());
        }
        if let Some((index, &value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(OptimError::NonFinite { index, value });
        }
        self.update(&mut theta, grad)?;
        params.set_trainable(&theta)?;
        Ok(())
    }

    /// Slice form of [`OptimizerState::step`].
    pub fn update(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<(), OptimError> {
        if grad.len() != theta.len() {
            return Err(ShapeError {
                expected: theta.len(),
                got: grad.len(),
            }
            .into());
        }
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (t, g) in theta.iter_mut().zip(grad) {
                    *t -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.len() != theta.len() {
                    return Err(ShapeError {
                        expected: self.m.len(),
                        got: theta.len(),
                    }
                    .into());
                }
                let t = (self.step + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..theta.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}
