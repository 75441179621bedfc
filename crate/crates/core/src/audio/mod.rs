//! Utterance-level acoustic features from PCM audio.
//!
//! A clip is framed (Hann window, zero-padded radix-2 FFT) and reduced to a
//! fixed named vector: MFCC and delta-MFCC statistics, spectral centroid,
//! bandwidth and roll-off, chroma, zero-crossing rate and RMS energy, plus
//! three clip-level scalars (harmonic ratio, silence ratio, autocorrelation
//! peak). Per-frame quantities are summarised by their mean and population
//! standard deviation across frames.
//!
//! After z-scoring, [`LeafEmbedder`] appends one-hot GBDT leaf memberships.

pub mod fft;
mod leaf;
pub mod mfcc;
pub mod spectral;
pub mod stft;
pub mod temporal;
pub mod wav;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

pub use leaf::LeafEmbedder;
pub use stft::{stft_magnitude, Spectrogram};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples must be finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    pub frame_length: usize,
    pub hop_length: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_length: 1024,
            hop_length: 512,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_length == 0 || self.hop_length > self.frame_length {
            return Err(Error::invalid(format!(
                "frame config needs 0 < hop ({}) <= frame_length ({})",
                self.hop_length, self.frame_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioConfig {
    pub frame: FrameConfig,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub delta_width: usize,
    pub rolloff: f64,
    /// Frames quieter than this fraction of the loudest frame's RMS count
    /// as silent.
    pub silence_threshold: f64,
    pub pitch_min_hz: f64,
    pub pitch_max_hz: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            n_mels: 40,
            n_mfcc: 13,
            delta_width: 9,
            rolloff: 0.85,
            silence_threshold: 0.05,
            pitch_min_hz: 50.0,
            pitch_max_hz: 400.0,
        }
    }
}

impl AudioConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return Err(Error::invalid("audio config needs 1 <= n_mfcc <= n_mels"));
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::invalid("audio rolloff must lie in (0, 1]"));
        }
        if !(self.pitch_min_hz > 0.0 && self.pitch_min_hz < self.pitch_max_hz) {
            return Err(Error::invalid("audio pitch range needs 0 < min < max"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        feature_names(self).len()
    }
}

/// Column names of the extracted vector, in output order.
pub fn feature_names(cfg: &AudioConfig) -> Vec<String> {
    let mut names = Vec::new();
    for block in ["mfcc_mean", "mfcc_std", "delta_mfcc_mean", "delta_mfcc_std"] {
        names.extend((0..cfg.n_mfcc).map(|i| format!("{block}_{i}")));
    }
    for stat in ["centroid", "bandwidth", "rolloff"] {
        names.push(format!("{stat}_mean"));
        names.push(format!("{stat}_std"));
    }
    names.extend(spectral::PITCH_CLASSES.iter().map(|p| format!("chroma_mean_{p}")));
    for stat in ["zcr", "rmse"] {
        names.push(format!("{stat}_mean"));
        names.push(format!("{stat}_std"));
    }
    names.extend(["harmonic_ratio", "silence_ratio", "autocorr_peak"].map(String::from));
    names
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let first = xs.clone().next().unwrap_or(0.0);
    if xs.clone().all(|x| x == first) {
        return (first, 0.0);
    }
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn extract_audio_features(clip: &AudioClip, cfg: &AudioConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let spec = stft_magnitude(clip, &cfg.frame)?;
    let nm = cfg.n_mfcc;
    let ceps = mfcc::mfcc_with_delta(&spec, cfg.n_mels, nm, cfg.delta_width)?;
    let mut out = vec![0.0; 4 * nm];
    for (block, offset) in [(0, 0), (2, nm)] {
        for i in 0..nm {
            let (m, s) = mean_std(ceps.iter().map(|c| c[offset + i]));
            out[block * nm + i] = m;
            out[(block + 1) * nm + i] = s;
        }
    }
    let shape = spectral::spectral_shape(&spec, cfg.rolloff);
    for get in [
        (|s: &spectral::SpectralShape| s.centroid) as fn(&spectral::SpectralShape) -> f64,
        |s| s.bandwidth,
        |s| s.rolloff,
    ] {
        let (m, s) = mean_std(shape.iter().map(get));
        out.extend([m, s]);
    }
    let chroma = spectral::chroma_stft(&spec);
    for p in 0..12 {
        out.push(chroma.iter().map(|c| c[p]).sum::<f64>() / chroma.len() as f64);
    }
    let tf = temporal::time_features(clip, cfg)?;
    for series in [&tf.zcr, &tf.rmse] {
        let (m, s) = mean_std(series.iter().copied());
        out.extend([m, s]);
    }
    out.push(spectral::harmonic_ratio(&spec));
    out.push(tf.silence_ratio);
    out.push(tf.autocorr_peak);
    debug_assert_eq!(out.len(), cfg.width());
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("audio feature vector".into()));
    }
    Ok(out)
}

/// Extracts one row per clip, preserving input order.
pub fn extract_audio_matrix(clips: &[AudioClip], cfg: &AudioConfig) -> Result<FeatureMatrix> {
    let rows = clips
        .iter()
        .map(|c| extract_audio_features(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(FeatureMatrix::new(0, cfg.width(), Vec::new(), feature_names(cfg))?);
    }
    FeatureMatrix::from_rows(&rows, feature_names(cfg))
}
