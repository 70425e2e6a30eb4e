use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::graph::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use super::DiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::warm_up_sgd()
    }
}

impl OptimizerConfig {
    /// SGD with lr 1e-2, momentum 0.9, weight decay 5e-4, batch 128.
    pub fn warm_up_sgd() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
        }
    }

    /// Adam with lr 2e-4, β1 0.5, β2 0.999, batch 128.
    pub fn joint_adam() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 2e-4,
            momentum: 0.0,
            weight_decay: 0.0,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
        }
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        let bad = |msg: &str| Err(DiffError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 || !(self.epsilon > 0.0) {
            return bad("weight decay must be >= 0 and epsilon > 0");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Slot {
    first: Tensor,
    second: Tensor,
}

/// Stateful first-order optimizer over a fixed parameter set.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    params: Vec<ParamId>,
    slots: HashMap<ParamId, Slot>,
    steps: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: Vec<ParamId>) -> Result<Self, DiffError> {
        cfg.validate()?;
        Ok(Optimizer { cfg, params, slots: HashMap::new(), steps: 0 })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to every owned parameter. A parameter missing from
    /// `grads` is treated as having zero gradient. Any non-finite gradient
    /// aborts the step before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<(), DiffError> {
        for &id in &self.params {
            if let Some(g) = grads.get(id) {
                if !g.is_finite() {
                    return Err(DiffError::Diverged(format!("non-finite gradient for '{}'", store.name(id))));
                }
            }
        }
        self.steps += 1;
        let cfg = self.cfg.clone();
        let t = self.steps as i32;
        for &id in &self.params {
            let p = store.get_mut(id);
            let slot = self.slots.entry(id).or_insert_with(|| Slot {
                first: Tensor::zeros(p.rows(), p.cols()),
                second: Tensor::zeros(p.rows(), p.cols()),
            });
            let g = grads.get(id);
            let grad_at = |k: usize, p: f64| g.map_or(0.0, |g| g.data()[k]) + cfg.weight_decay * p;
            match cfg.kind {
                OptimizerKind::Sgd => {
                    let buf = slot.first.data_mut();
                    for (k, pk) in p.data_mut().iter_mut().enumerate() {
                        let d = grad_at(k, *pk);
                        buf[k] = cfg.momentum * buf[k] + d;
                        *pk -= cfg.learning_rate * buf[k];
                    }
                }
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - cfg.beta1.powi(t);
                    let bc2 = 1.0 - cfg.beta2.powi(t);
                    let (m, v) = (slot.first.data_mut(), slot.second.data_mut());
                    for (k, pk) in p.data_mut().iter_mut().enumerate() {
                        let d = grad_at(k, *pk);
                        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * d;
                        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * d * d;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        *pk -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
