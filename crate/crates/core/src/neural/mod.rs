//! Dense encoders, late-fusion head, cross-entropy, backprop and Adam.
//!
//! A [`FusionModel`] has one encoder branch per feature view. Each encoder
//! layer is `Dense → [BatchNorm] → ReLU → [Dropout]`. Branch outputs are
//! concatenated (audio, video, text for the fused model), passed through the
//! hidden head layers and a dense softmax output.
//!
//! * Dropout is inverted: train-mode masks keep a unit with probability
//!   `1 − p` and scale it by `1/(1 − p)`; eval mode is the identity.
//! * Batch-norm normalises with batch statistics in train mode and running
//!   statistics (momentum 0.9, ε = 1e−5) in eval mode. Running statistics
//!   are folded in explicitly with [`FusionModel::update_running_stats`].
//! * The loss is the batch mean of `−ln p[y]` with `p` floored at 1e−12.
//!
//! Forward passes record the model generation; every parameter mutation
//! bumps it, so backward on a stale cache is an error.

mod adam;
pub mod checkpoint;
mod layers;
mod loss;
mod model;

use serde::{Deserialize, Serialize};

pub use adam::AdamState;
pub use layers::{glorot_limit, Block, BlockGrad, LayerSpec, BN_EPS, BN_MOMENTUM};
pub use loss::{mean_cross_entropy, softmax_rows, PROB_FLOOR};
pub use model::{Batch, BranchSpec, ForwardPass, FusionModel, Gradients, Mode, ModelSpec};

use crate::error::Result;

/// Layer stacks for each encoder and the fusion head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub text: Vec<LayerSpec>,
    pub audio: Vec<LayerSpec>,
    pub video: Vec<LayerSpec>,
    /// Hidden layers between the fused vector and the softmax output.
    pub head: Vec<LayerSpec>,
    /// Appends a 128-unit ReLU layer to the video encoder so every encoder
    /// emits 128 features.
    pub video_projection: bool,
    /// Encoder used for the early-fusion baseline over concatenated raw
    /// features.
    pub early: Vec<LayerSpec>,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            text: vec![LayerSpec::new(128, 0.3, false)],
            audio: vec![LayerSpec::new(128, 0.3, false)],
            video: vec![
                LayerSpec::new(128, 0.3, true),
                LayerSpec::new(64, 0.3, true),
                LayerSpec::new(32, 0.3, true),
            ],
            head: vec![LayerSpec::new(256, 0.4, false)],
            video_projection: false,
            early: vec![LayerSpec::new(128, 0.3, false)],
        }
    }
}

impl ArchitectureConfig {
    pub fn video_layers(&self) -> Vec<LayerSpec> {
        let mut v = self.video.clone();
        if self.video_projection {
            v.push(LayerSpec::new(128, 0.0, false));
        }
        v
    }

    /// Layers for a named branch (`text`, `audio`, `video`, `early`).
    pub fn branch(&self, name: &str, input_width: usize) -> BranchSpec {
        let layers = match name {
            "text" => self.text.clone(),
            "audio" => self.audio.clone(),
            "video" => self.video_layers(),
            _ => self.early.clone(),
        };
        BranchSpec {
            name: name.to_string(),
            input_width,
            layers,
        }
    }

    /// Late-fusion model over `(name, width)` views, in the given order.
    pub fn model(&self, views: &[(&str, usize)], n_classes: usize) -> ModelSpec {
        ModelSpec {
            branches: views.iter().map(|&(n, w)| self.branch(n, w)).collect(),
            head: self.head.clone(),
            n_classes,
        }
    }
}

impl FusionModel {
    /// Applies one Adam update with `grads` and invalidates caches.
    pub fn adam_step(&mut self, grads: &Gradients, state: &mut AdamState) -> Result<()> {
        let g = grads.tensors();
        let mut p = self.trainable_mut();
        state.step(&mut p, &g)
    }

    pub fn new_adam(&self, lr: f64) -> AdamState {
        let shapes: Vec<usize> = self.trainable().iter().map(|t| t.len()).collect();
        AdamState::new(lr, &shapes)
    }
}
