//! Training loop, callbacks, evaluation metrics and run artifacts.
//!
//! Both callbacks watch validation loss with an absolute improvement
//! threshold of 1e−4 and keep separate stagnation counters. Early stopping
//! fires after `early_stop_patience` stagnant epochs; the plateau rule
//! multiplies the learning rate by `plateau_factor` (not below `min_lr`)
//! after `plateau_patience` stagnant epochs and then restarts its counter.
//! A reduction decided after epoch `e` applies from epoch `e + 1`, and the
//! history records the rate each epoch actually used. The best-epoch
//! weights are restored when the loop ends, whether or not it stopped
//! early.

pub mod callbacks;
pub mod export;
mod fit;
pub mod metrics;

pub use callbacks::{CallbackConfig, Callbacks, Decision, MIN_DELTA};
pub use export::{export_history, export_report, history_csv, LinePlot, Series};
pub use fit::{
    train_loop, EpochMetrics, EpochRecord, EpochRunner, FusionRunner, SplitViews, TrainConfig, TrainHistory,
    EVAL_CHUNK,
};
pub use metrics::{
    accuracy, argmax, binary_auc, confusion_matrix, evaluate_probs, log_loss, pr_curve, predictions, prf_scores,
    roc_auc, roc_points, EvalReport, PrfScores, RocSummary,
};

use crate::error::Result;
use crate::neural::FusionModel;

/// Eval-mode metrics of a model on one split.
pub fn evaluate(model: &FusionModel, split: &SplitViews<'_>) -> Result<EvalReport> {
    if split.is_empty() {
        return Err(crate::Error::invalid("evaluation split is empty"));
    }
    evaluate_probs(&split.predict(model)?, &split.row_labels(), model.n_classes())
}
