//! Early stopping and plateau learning-rate reduction as a pure state
//! machine over per-epoch validation losses.

use serde::{Deserialize, Serialize};

/// Minimum absolute decrease in validation loss that counts as improvement.
pub const MIN_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallbackConfig {
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
}

/// What the loop should do after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub improved: bool,
    pub stop: bool,
    /// Learning rate for the next epoch.
    pub next_lr: f64,
    pub reduced: bool,
}

/// Separate stagnation counters for stopping and for the plateau rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Callbacks {
    cfg: CallbackConfig,
    best: f64,
    best_epoch: Option<usize>,
    stop_wait: usize,
    plateau_wait: usize,
    lr: f64,
}

impl Callbacks {
    pub fn new(cfg: CallbackConfig, lr: f64) -> Self {
        Self {
            cfg,
            best: f64::INFINITY,
            best_epoch: None,
            stop_wait: 0,
            plateau_wait: 0,
            lr,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }

    /// Feeds the validation loss of `epoch` (1-based).
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Decision {
        let improved = val_loss < self.best - MIN_DELTA;
        if improved {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.stop_wait = 0;
            self.plateau_wait = 0;
        } else {
            self.stop_wait += 1;
            self.plateau_wait += 1;
        }
        let mut reduced = false;
        if self.plateau_wait >= self.cfg.plateau_patience {
            let next = (self.lr * self.cfg.plateau_factor).max(self.cfg.min_lr);
            reduced = next < self.lr;
            self.lr = next;
            self.plateau_wait = 0;
        }
        Decision {
            improved,
            stop: self.stop_wait >= self.cfg.early_stop_patience,
            next_lr: self.lr,
            reduced,
        }
    }
}
