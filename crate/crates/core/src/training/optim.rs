//! AdamW with decoupled weight decay and an epoch-wise exponential
//! learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::autodiff::Module;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate at every epoch boundary.
    pub lr_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.8,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.01,
            lr_decay: 0.999,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    lr: f64,
    steps: u64,
    epochs: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            lr: config.learning_rate,
            config,
            steps: 0,
            epochs: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    /// Marks an epoch boundary: `lr ← lr · decay`.
    pub fn end_epoch(&mut self) {
        self.epochs += 1;
        self.lr = self.config.learning_rate * self.config.lr_decay.powi(self.epochs as i32);
    }

    /// Updates every parameter of `module` from its accumulated gradient.
    /// Parameters are matched to their moment buffers by visiting order.
    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M) {
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let lr = self.lr;
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut i = 0;
        module.visit_mut(&mut |p| {
            if ms.len() <= i {
                ms.push(vec![0.0; p.len()]);
                vs.push(vec![0.0; p.len()]);
            }
            let grad = p.grad().to_vec();
            let (m, v) = (&mut ms[i], &mut vs[i]);
            for (((w, g), m), v) in p.value_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *w -= lr * c.weight_decay * *w;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
            }
            i += 1;
        });
    }
}
