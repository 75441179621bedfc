//! Multimodal sentiment classification from engineered per-modality
//! features, fused late by dense encoders.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`data`]: feature tables, z-scoring, CSV/JSONL ingestion
//! * [`text`]: normalisation, TF-IDF, LASSO and RFE selection
//! * [`audio`]: WAV decoding, STFT, MFCC and friends, leaf embeddings
//! * [`gbdt`]: multiclass gradient-boosted trees
//! * [`video`]: gap interpolation and GBDT probability stacking
//! * [`resample`]: label remapping, stratified splits, oversampling
//! * [`neural`]: dense encoders, fusion head, backprop, Adam, checkpoints
//! * [`train`]: training loop with callbacks, metrics, report export
//! * [`synth`]: deterministic synthetic corpora
//! * [`config`] and [`pipeline`]: run configuration and stage orchestration

pub mod audio;
pub mod config;
pub mod data;
pub mod error;
pub mod fsutil;
pub mod gbdt;
pub(crate) mod linalg;
pub mod neural;
pub mod pipeline;
pub mod resample;
pub mod rng;
pub mod synth;
pub mod text;
pub mod train;
pub mod video;

pub use error::{Error, ErrorCategory, Result};
pub use rng::SeededRng;
