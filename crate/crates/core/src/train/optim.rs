use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

/// Multiply the learning rate by `factor` from iteration `at` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub factor: f32,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f32,
    pub momentum: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub lr_decay: Vec<LrDecay>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.1,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_decay: Vec::new(),
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f32) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn momentum(learning_rate: f32, momentum: f32) -> Self {
        Self {
            kind: OptimizerKind::Momentum,
            learning_rate,
            momentum,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f32) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::default()
        }
    }

    /// Field names in errors are prefixed with `optimizer.`.
    pub fn validate(&self) -> Result<()> {
        let bad =
            |field: &str, rule: &str| Err(Error::Config(format!("optimizer.{field}: {rule}")));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate", "must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must be in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon", "must be positive");
        }
        if self
            .lr_decay
            .iter()
            .any(|d| !(d.factor.is_finite() && d.factor >= 0.0))
        {
            return bad("lr_decay", "factors must be finite and non-negative");
        }
        Ok(())
    }

    /// Learning rate for the step taken after `completed` steps.
    pub fn learning_rate_at(&self, completed: u64) -> f32 {
        self.lr_decay
            .iter()
            .filter(|d| completed >= d.at)
            .fold(self.learning_rate, |lr, d| lr * d.factor)
    }
}

/// Optimizer configuration plus its slot tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    /// Momentum buffer, or Adam's first moment.
    first: Option<ParameterSet>,
    /// Adam's second moment.
    second: Option<ParameterSet>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParameterSet) -> Self {
        let (first, second) = match config.kind {
            OptimizerKind::Sgd => (None, None),
            OptimizerKind::Momentum => (Some(params.zeros_like()), None),
            OptimizerKind::Adam => (Some(params.zeros_like()), Some(params.zeros_like())),
        };
        Self {
            config,
            first,
            second,
            step: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// The buffer targeted by momentum masking, if the optimizer has one.
    pub fn momentum_buffer(&self) -> Option<&ParameterSet> {
        self.first.as_ref()
    }

    pub fn momentum_buffer_mut(&mut self) -> Option<&mut ParameterSet> {
        self.first.as_mut()
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        params.check_compatible(grads)?;
        let lr = self.config.learning_rate_at(self.step);
        self.step += 1;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
                    p.values_mut()
                        .iter_mut()
                        .zip(g.values())
                        .for_each(|(w, &g)| *w -= lr * g);
                }
            }
            OptimizerKind::Momentum => {
                let mu = self.config.momentum;
                let buf = self.first.as_mut().expect("momentum slot");
                for ((p, g), m) in params
                    .tensors_mut()
                    .iter_mut()
                    .zip(grads)
                    .zip(buf.tensors_mut())
                {
                    for ((w, &g), m) in p
                        .values_mut()
                        .iter_mut()
                        .zip(g.values())
                        .zip(m.values_mut())
                    {
                        *m = mu * *m + g;
                        *w -= lr * *m;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.epsilon);
                let t = self.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                let m_set = self.first.as_mut().expect("adam first moment");
                let v_set = self.second.as_mut().expect("adam second moment");
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .iter_mut()
                    .zip(grads)
                    .zip(m_set.tensors_mut())
                    .zip(v_set.tensors_mut())
                {
                    for (((w, &g), m), v) in p
                        .values_mut()
                        .iter_mut()
                        .zip(g.values())
                        .zip(m.values_mut())
                        .zip(v.values_mut())
                    {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
