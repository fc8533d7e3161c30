use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Sgd {
            lr: 1e-3,
            momentum: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig::Sgd { lr, momentum: 0.9 }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            OptimizerConfig::Sgd { momentum, .. } => OptimizerConfig::Sgd { lr, momentum },
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => OptimizerConfig::Adam { lr, beta1, beta2, eps },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { lr, momentum } => lr > 0.0 && lr.is_finite() && (0.0..1.0).contains(&momentum),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && lr.is_finite() && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("bad optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    m: Tensor,
    v: Tensor,
    steps: u32,
}

/// Stateful first-order optimizer over a subset of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    ids: Vec<ParamId>,
    slots: BTreeMap<ParamId, Slot>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, ids: impl IntoIterator<Item = ParamId>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ids: ids.into_iter().collect(),
            slots: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    /// Applies one update. Parameters the gradient did not reach get a zero
    /// gradient. Any non-finite gradient aborts before anything is written.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        let mut collected = Vec::with_capacity(self.ids.len());
        for &id in &self.ids {
            let g = grads.param(id).unwrap_or_else(|| Tensor::zeros(params.get(id).shape()));
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {}", params.name(id)),
                });
            }
            collected.push((id, g));
        }
        for (id, g) in collected {
            let p = params.get_mut(id);
            let slot = self.slots.entry(id).or_insert_with(|| Slot {
                m: Tensor::zeros(p.shape()),
                v: Tensor::zeros(p.shape()),
                steps: 0,
            });
            slot.steps += 1;
            match self.config {
                OptimizerConfig::Sgd { lr, momentum } => {
                    for ((w, m), g) in p.data_mut().iter_mut().zip(slot.m.data_mut()).zip(g.data()) {
                        *m = momentum * *m + g;
                        *w -= lr * *m;
                    }
                }
                OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(slot.steps as i32);
                    let c2 = 1.0 - beta2.powi(slot.steps as i32);
                    let it = p.data_mut().iter_mut().zip(slot.m.data_mut()).zip(slot.v.data_mut());
                    for (((w, m), v), g) in it.zip(g.data()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
