//! AdamW hyperparameters and the reduce-on-plateau learning-rate scheduler.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
            plateau_factor: 0.7,
            plateau_patience: 5,
            min_lr: 1e-6,
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored metric has not
/// improved for more than `patience` epochs (minimize mode, cooldown 0,
/// floored at `min_lr`).
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        PlateauScheduler {
            lr: initial_lr,
            factor,
            patience,
            min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn from_config(cfg: &AdamWConfig) -> Self {
        Self::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feed one epoch's validation metric; returns the learning rate to use next.
    pub fn step(&mut self, metric: f64) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs > self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}
