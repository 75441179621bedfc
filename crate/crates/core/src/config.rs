//! Run configuration: one TOML document covering every stage.
//!
//! Unknown keys are rejected at every level. Missing keys take the values
//! shown in [`DEFAULT_CONFIG_TOML`], which parses to [`RunConfig::default`].
//! Relative paths are resolved against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioConfig;
use crate::error::{Error, Result};
use crate::fsutil::read_string;
use crate::gbdt::GbdtConfig;
use crate::neural::ArchitectureConfig;
use crate::resample::{LabelMap, SplitFractions, TargetCounts};
use crate::text::TextPipelineConfig;
use crate::train::TrainConfig;
use crate::video::{GapFill, StackingMode};

/// A trainable model variant. `Fused` is the full pipeline; the rest are
/// comparison baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Fused,
    Text,
    Audio,
    Video,
    Early,
    LateSimple,
}

impl ModelKind {
    pub const BASELINES: [ModelKind; 5] = [
        ModelKind::Text,
        ModelKind::Audio,
        ModelKind::Video,
        ModelKind::Early,
        ModelKind::LateSimple,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Fused => "fused",
            ModelKind::Text => "text",
            ModelKind::Audio => "audio",
            ModelKind::Video => "video",
            ModelKind::Early => "early",
            ModelKind::LateSimple => "late-simple",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ModelKind::Fused]
            .into_iter()
            .chain(ModelKind::BASELINES)
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown model {s:?}; expected fused, text, audio, video, early or late-simple"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub manifest: PathBuf,
    pub video: PathBuf,
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            manifest: "corpus/manifest.csv".into(),
            video: "corpus/video.csv".into(),
            work_dir: "run".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OversampleConfig {
    pub enabled: bool,
    /// Training rows wanted per class; classes already above stay as is.
    pub targets: TargetCounts,
}

impl Default for OversampleConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            targets: TargetCounts::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeafConfig {
    pub enabled: bool,
    pub gbdt: GbdtConfig,
}

impl Default for LeafConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            gbdt: GbdtConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoConfig {
    pub gap_fill: GapFill,
    pub stacking_enabled: bool,
    pub stacking: StackingMode,
    pub gbdt: GbdtConfig,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            gap_fill: GapFill::Linear,
            stacking_enabled: true,
            stacking: StackingMode::default(),
            gbdt: GbdtConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Source label id → target class id.
    pub label_map: LabelMap,
    /// Baselines trained by `run` after the fused model.
    pub baselines: Vec<ModelKind>,
    pub paths: PathsConfig,
    pub split: SplitFractions,
    pub oversample: OversampleConfig,
    pub text: TextPipelineConfig,
    pub audio: AudioConfig,
    pub leaf: LeafConfig,
    pub video: VideoConfig,
    pub model: ArchitectureConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            label_map: LabelMap::default(),
            baselines: ModelKind::BASELINES.to_vec(),
            paths: PathsConfig::default(),
            split: SplitFractions::default(),
            oversample: OversampleConfig::default(),
            text: TextPipelineConfig::default(),
            audio: AudioConfig::default(),
            leaf: LeafConfig::default(),
            video: VideoConfig::default(),
            model: ArchitectureConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Annotated defaults; every key the loader accepts appears here.
pub const DEFAULT_CONFIG_TOML: &str = r#"# Master seed; every stochastic stage draws a named substream from it.
seed = 42
# Source label id -> target class id (index = source id).
label_map = [0, 1, 1, 2, 2, 3, 4, 5]
# Baselines trained by `run` after the fused model.
baselines = ["text", "audio", "video", "early", "late-simple"]

[paths]
# manifest.csv columns: id, clip_path, label, transcript. clip_path is
# relative to the manifest's directory.
manifest = "corpus/manifest.csv"
# Numeric CSV row-aligned with the manifest; empty or NaN cells are missing.
video = "corpus/video.csv"
# All stage outputs go below this directory.
work_dir = "run"

[split]
# Per-class stratified fractions (must sum to 1).
train = 0.8
val = 0.1
test = 0.1

[oversample]
enabled = true
# Training rows per class after sampling with replacement.
targets = [2933, 2933, 5000, 2933, 2933, 4000]

[text]
max_vocab = 2000
rfe_keep = 512
# Fraction of the surplus over rfe_keep removed per elimination round.
rfe_step = 0.5
# Output width; selected columns are zero-padded up to it.
pad_width = 512

[text.lasso]
lambda = 1.0
max_iter = 1000
tol = 1e-6
fit_intercept = true

[audio]
n_mels = 40
n_mfcc = 13
delta_width = 9
rolloff = 0.85
# Frames below this fraction of the loudest frame RMS count as silent.
silence_threshold = 0.05
pitch_min_hz = 50.0
pitch_max_hz = 400.0

[audio.frame]
frame_length = 1024
hop_length = 512

[leaf]
# Append one-hot GBDT leaf memberships to the audio features.
enabled = true

[leaf.gbdt]
n_rounds = 50
max_depth = 4
learning_rate = 0.3
l2_reg = 1.0
min_samples_leaf = 5
subsample = 1.0
colsample = 1.0

[video]
# "linear" (along row order) or "median".
gap_fill = "linear"
# Append GBDT softmax probabilities to the video features.
stacking_enabled = true

[video.stacking]
# "out_of_fold" (with folds) or "in_sample".
mode = "out_of_fold"
folds = 5

[video.gbdt]
n_rounds = 50
max_depth = 4
learning_rate = 0.3
l2_reg = 1.0
min_samples_leaf = 5
subsample = 1.0
colsample = 1.0

[model]
text = [{ units = 128, dropout = 0.3, batch_norm = false }]
audio = [{ units = 128, dropout = 0.3, batch_norm = false }]
video = [
    { units = 128, dropout = 0.3, batch_norm = true },
    { units = 64, dropout = 0.3, batch_norm = true },
    { units = 32, dropout = 0.3, batch_norm = true },
]
# Hidden layers between the fused vector and the softmax output.
head = [{ units = 256, dropout = 0.4, batch_norm = false }]
# Append a 128-unit layer to the video encoder.
video_projection = false
# Encoder of the early-fusion baseline.
early = [{ units = 128, dropout = 0.3, batch_norm = false }]

[train]
epochs = 50
batch_size = 64
lr = 0.001
early_stop_patience = 5
plateau_patience = 3
plateau_factor = 0.5
min_lr = 1e-6
# Fill history.csv `seconds`; off keeps outputs byte-reproducible.
record_wall_time = false
"#;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.paths.manifest, &mut self.paths.video, &mut self.paths.work_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn n_classes(&self) -> usize {
        self.label_map.n_targets()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        LabelMap::new(self.label_map.targets().to_vec()).map_err(cfg_err)?;
        self.split.validate().map_err(cfg_err)?;
        if self.oversample.enabled {
            TargetCounts::new(self.oversample.targets.as_slice().to_vec()).map_err(cfg_err)?;
            if self.oversample.targets.as_slice().len() < self.n_classes() {
                return Err(Error::Config(format!(
                    "oversample.targets lists {} classes but label_map produces {}",
                    self.oversample.targets.as_slice().len(),
                    self.n_classes()
                )));
            }
        }
        self.audio.validate().map_err(cfg_err)?;
        self.leaf.gbdt.validate().map_err(cfg_err)?;
        self.video.gbdt.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        let t = &self.text;
        if t.max_vocab == 0 || t.pad_width == 0 || t.rfe_keep == 0 || !(t.rfe_step > 0.0 && t.rfe_step <= 0.5) {
            return Err(Error::Config(
                "text needs positive max_vocab, pad_width, rfe_keep and 0 < rfe_step <= 0.5".into(),
            ));
        }
        if !(t.lasso.lambda >= 0.0) {
            return Err(Error::Config("text.lasso.lambda must be >= 0".into()));
        }
        let m = &self.model;
        for (name, layers) in [("text", &m.text), ("audio", &m.audio), ("video", &m.video), ("early", &m.early)] {
            if layers.is_empty() {
                return Err(Error::Config(format!("model.{name} needs at least one layer")));
            }
        }
        if let StackingMode::OutOfFold { folds } = self.video.stacking {
            if folds < 2 {
                return Err(Error::Config("video.stacking.folds must be >= 2".into()));
            }
        }
        Ok(())
    }
}
