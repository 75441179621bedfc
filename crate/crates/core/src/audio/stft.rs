//! Framing and short-time Fourier magnitudes.

use std::f64::consts::PI;

use super::{AudioClip, FrameConfig};
use super::fft::{next_pow2, rfft_magnitude};
use crate::error::{Error, Result};

/// Frames × bins magnitude spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
    /// Row-major `frames × bins`.
    pub mag: Vec<f64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.mag[t * self.bins..(t + 1) * self.bins]
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * f64::from(self.sample_rate) / self.fft_size as f64
    }

    pub fn bin_width(&self) -> f64 {
        f64::from(self.sample_rate) / self.fft_size as f64
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn frame_count(len: usize, cfg: &FrameConfig) -> Result<usize> {
    cfg.validate()?;
    if len < cfg.frame_length {
        return Err(Error::invalid(format!(
            "clip of {len} samples is shorter than one {}-sample frame",
            cfg.frame_length
        )));
    }
    Ok(1 + (len - cfg.frame_length) / cfg.hop_length)
}

/// Iterates the raw (unwindowed) frames of a clip.
pub fn frames<'a>(
    samples: &'a [f64],
    cfg: &FrameConfig,
) -> Result<impl Iterator<Item = &'a [f64]> + 'a> {
    let n = frame_count(samples.len(), cfg)?;
    let (len, hop) = (cfg.frame_length, cfg.hop_length);
    Ok((0..n).map(move |t| &samples[t * hop..t * hop + len]))
}

pub fn stft_magnitude(clip: &AudioClip, cfg: &FrameConfig) -> Result<Spectrogram> {
    let n_frames = frame_count(clip.samples.len(), cfg)?;
    let fft_size = next_pow2(cfg.frame_length);
    let bins = fft_size / 2 + 1;
    let window = hann(cfg.frame_length);
    let mut mag = Vec::with_capacity(n_frames * bins);
    let mut buf = vec![0.0; cfg.frame_length];
    for f in frames(&clip.samples, cfg)? {
        for ((b, x), w) in buf.iter_mut().zip(f).zip(&window) {
            *b = x * w;
        }
        mag.extend(rfft_magnitude(&buf, fft_size));
    }
    Ok(Spectrogram {
        frames: n_frames,
        bins,
        fft_size,
        sample_rate: clip.sample_rate,
        mag,
    })
}
