//! SGD and Adam over ParameterSets.

use crate::error::{Error, Result};
use crate::params::{Gradients, ParameterSet};
use crate::tensor::Tensor;
use indexmap::IndexMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-data-center optimizer. Adam moments persist across federation rounds;
/// only model parameters travel.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    first_moment: IndexMap<String, Tensor>,
    second_moment: IndexMap<String, Tensor>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            first_moment: IndexMap::new(),
            second_moment: IndexMap::new(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update. Gradients must be keyed exactly like `params`.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &Gradients) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::ParameterSet(format!(
                "gradient count {} vs parameter count {}",
                grads.len(),
                params.len()
            )));
        }
        for name in params.names() {
            if !grads.contains_key(&name) {
                return Err(Error::ParameterSet(format!("missing gradient for {name}")));
            }
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (name, grad) in grads {
                    let p = params.get(name).unwrap();
                    let updated = p.zip(grad, "sgd", |pv, gv| pv - lr * gv)?;
                    params.set(name, updated)?;
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step_count as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (name, grad) in grads {
                    let p = params.get(name).unwrap();
                    let m = self
                        .first_moment
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(grad.shape()));
                    *m = m.zip(grad, "adam m", |mv, gv| beta1 * mv + (1.0 - beta1) * gv)?;
                    let v = self
                        .second_moment
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(grad.shape()));
                    *v = v.zip(grad, "adam v", |vv, gv| beta2 * vv + (1.0 - beta2) * gv * gv)?;
                    let m = &self.first_moment[name];
                    let v = &self.second_moment[name];
                    let mut data = Vec::with_capacity(p.len());
                    for ((&pv, &mv), &vv) in p.data().iter().zip(m.data()).zip(v.data()) {
                        let mhat = mv / bc1;
                        let vhat = vv / bc2;
                        data.push(pv - lr * mhat / (vhat.sqrt() + eps));
                    }
                    params.set(name, Tensor::new(p.shape().to_vec(), data)?)?;
                }
            }
        }
        Ok(())
    }
}
