//! Epoch loop driving a [`EpochRunner`] under the callback rules.

use std::path::PathBuf;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::callbacks::{CallbackConfig, Callbacks};
use super::metrics::predictions;
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::neural::{checkpoint, mean_cross_entropy, AdamState, Batch, FusionModel, Mode};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    /// Fill the `seconds` history column with measured wall time. Off by
    /// default so history files are reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            lr: 1e-3,
            early_stop_patience: 5,
            plateau_patience: 3,
            plateau_factor: 0.5,
            min_lr: 1e-6,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 || self.plateau_patience == 0 {
            return Err(Error::invalid("epochs, batch_size and patiences must be positive"));
        }
        if !(self.lr > 0.0) || !(self.min_lr > 0.0) {
            return Err(Error::invalid("lr and min_lr must be positive"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::invalid("plateau_factor must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn callbacks(&self) -> CallbackConfig {
        CallbackConfig {
            early_stop_patience: self.early_stop_patience,
            plateau_patience: self.plateau_patience,
            plateau_factor: self.plateau_factor,
            min_lr: self.min_lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// One training epoch plus best-weight bookkeeping.
pub trait EpochRunner {
    fn run_epoch(&mut self, epoch: usize, lr: f64) -> Result<EpochMetrics>;
    /// Called whenever validation loss improves.
    fn save_best(&mut self, epoch: usize) -> Result<()>;
    fn restore_best(&mut self) -> Result<()>;
}

/// Runs epochs until the budget or early stopping, then restores the best
/// weights.
pub fn train_loop<R: EpochRunner>(runner: &mut R, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    let mut cb = Callbacks::new(cfg.callbacks(), cfg.lr);
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        let lr = cb.lr();
        let start = Instant::now();
        let m = runner.run_epoch(epoch, lr)?;
        if !m.val_loss.is_finite() || !m.train_loss.is_finite() {
            return Err(Error::Numeric(format!("loss diverged at epoch {epoch}")));
        }
        let seconds = if cfg.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss: m.train_loss,
            train_acc: m.train_acc,
            val_loss: m.val_loss,
            val_acc: m.val_acc,
            lr,
            seconds,
        });
        let d = cb.observe(epoch, m.val_loss);
        info!(
            "epoch {epoch}: train_loss {:.4} acc {:.4} | val_loss {:.4} acc {:.4} | lr {lr:e}",
            m.train_loss, m.train_acc, m.val_loss, m.val_acc
        );
        if d.improved {
            runner.save_best(epoch)?;
        }
        if d.reduced {
            info!("plateau: learning rate reduced to {:e}", d.next_lr);
        }
        if d.stop {
            info!("early stopping after epoch {epoch}");
            history.stopped_early = true;
            break;
        }
    }
    let (best_epoch, best) = cb.best().expect("at least one epoch ran");
    history.best_epoch = best_epoch;
    history.best_val_loss = best;
    runner.restore_best()?;
    Ok(history)
}

/// One split: the rows `rows` of row-aligned feature views. `labels` is
/// indexed like the views. Rows may repeat (oversampling plans).
#[derive(Debug, Clone, Copy)]
pub struct SplitViews<'a> {
    pub views: &'a [&'a FeatureMatrix],
    pub labels: &'a [usize],
    pub rows: &'a [usize],
}

impl SplitViews<'_> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_labels(&self) -> Vec<usize> {
        self.rows.iter().map(|&r| self.labels[r]).collect()
    }

    /// Eval-mode probabilities for every row of the split.
    pub fn predict(&self, model: &FusionModel) -> Result<Vec<f64>> {
        model.predict_rows(self.views, self.labels, self.rows, EVAL_CHUNK)
    }
}

pub const EVAL_CHUNK: usize = 256;

/// Mini-batch Adam training of a [`FusionModel`].
pub struct FusionRunner<'a> {
    pub model: FusionModel,
    pub best: Option<FusionModel>,
    adam: AdamState,
    train: SplitViews<'a>,
    val: SplitViews<'a>,
    batch_size: usize,
    rng: SeededRng,
    checkpoint: Option<PathBuf>,
}

impl<'a> FusionRunner<'a> {
    pub fn new(
        model: FusionModel,
        train: SplitViews<'a>,
        val: SplitViews<'a>,
        cfg: &TrainConfig,
        rng: SeededRng,
        checkpoint: Option<PathBuf>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("training split is empty"));
        }
        if val.is_empty() {
            return Err(Error::invalid("validation split is empty"));
        }
        let adam = model.new_adam(cfg.lr);
        Ok(Self {
            model,
            best: None,
            adam,
            train,
            val,
            batch_size: cfg.batch_size,
            rng,
            checkpoint,
        })
    }

    pub fn into_model(self) -> FusionModel {
        self.model
    }
}

impl EpochRunner for FusionRunner<'_> {
    fn run_epoch(&mut self, _epoch: usize, lr: f64) -> Result<EpochMetrics> {
        self.adam.lr = lr;
        let n = self.train.len();
        let k = self.model.n_classes();
        let mut order: Vec<usize> = self.train.rows.to_vec();
        self.rng.shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(self.batch_size) {
            let batch = Batch::gather(self.train.views, self.train.labels, idx);
            let pass = self.model.forward(&batch, Mode::Train, &mut self.rng)?;
            loss_sum += self.model.loss(&pass, &batch.labels)? * idx.len() as f64;
            correct += predictions(&pass.probs, k)
                .iter()
                .zip(&batch.labels)
                .filter(|(p, y)| p == y)
                .count();
            let grads = self.model.backward(&pass, &batch.labels)?;
            self.model.adam_step(&grads, &mut self.adam)?;
            self.model.update_running_stats(&pass);
        }
        let probs = self.val.predict(&self.model)?;
        let val_labels = self.val.row_labels();
        let val_loss = mean_cross_entropy(&probs, &val_labels, k)?;
        let val_correct = predictions(&probs, k)
            .iter()
            .zip(&val_labels)
            .filter(|(p, y)| p == y)
            .count();
        Ok(EpochMetrics {
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            val_loss,
            val_acc: val_correct as f64 / self.val.len() as f64,
        })
    }

    fn save_best(&mut self, _epoch: usize) -> Result<()> {
        if let Some(path) = &self.checkpoint {
            checkpoint::save(path, &self.model)?;
        }
        self.best = Some(self.model.clone());
        Ok(())
    }

    fn restore_best(&mut self) -> Result<()> {
        if let Some(b) = &self.best {
            self.model = b.clone();
        }
        Ok(())
    }
}
