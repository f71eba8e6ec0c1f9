use serde::{Deserialize, Serialize};

use super::arch::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64, beta1: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr, .. } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }
}

/// Optimizer hyper-parameters plus slot buffers sized like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, len: usize) -> Result<Self> {
        if !(kind.lr() > 0.0) {
            return Err(Error::precondition(format!("learning rate {} must be > 0", kind.lr())));
        }
        let second = match kind {
            OptimizerKind::Adam { .. } => vec![0.0; len],
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Ok(Self {
            kind,
            first: vec![0.0; len],
            second,
            step: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update in place.
    pub fn step_in_place(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.first.len() {
            return Err(Error::Shape {
                context: "optimizer step",
                expected: self.first.len(),
                found: grad.len(),
            });
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd { lr, momentum } => {
                if momentum == 0.0 {
                    for (p, g) in params.iter_mut().zip(grad) {
                        *p -= lr * g;
                    }
                } else {
                    for ((p, g), v) in params.iter_mut().zip(grad).zip(self.first.iter_mut()) {
                        *v = momentum * *v + g;
                        *p -= lr * *v;
                    }
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    pub fn step(&mut self, model: &ParamVector, grad: &ParamVector) -> Result<ParamVector> {
        let mut next = model.values().to_vec();
        self.step_in_place(&mut next, grad.values())?;
        model.with_values(next)
    }
}
