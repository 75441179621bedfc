//! Time-domain descriptors: zero crossings, RMS energy, silence and pitch
//! periodicity.

use super::fft::{fft_in_place, next_pow2};
use super::stft::frames;
use super::{AudioClip, AudioConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeFeatures {
    pub zcr: Vec<f64>,
    pub rmse: Vec<f64>,
    pub silence_ratio: f64,
    pub autocorr_peak: f64,
}

pub fn zero_crossing_rate(frame: &[f64]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let changes = frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    changes as f64 / (frame.len() - 1) as f64
}

pub fn rms(frame: &[f64]) -> f64 {
    if frame.is_empty() {
        return 0.0;
    }
    (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt()
}

/// Linear autocorrelation `r(τ) = Σ x_t x_{t+τ}` for `τ = 0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return vec![0.0; max_lag + 1];
    }
    let size = next_pow2(2 * n);
    let mut re = vec![0.0; size];
    re[..n].copy_from_slice(x);
    let mut im = vec![0.0; size];
    fft_in_place(&mut re, &mut im, false);
    for (r, i) in re.iter_mut().zip(im.iter_mut()) {
        *r = *r * *r + *i * *i;
        *i = 0.0;
    }
    fft_in_place(&mut re, &mut im, true);
    (0..=max_lag)
        .map(|l| if l < n { re[l] / size as f64 } else { 0.0 })
        .collect()
}

/// Lag search window `[ceil(sr / max_hz), floor(sr / min_hz)]`.
pub fn pitch_lag_range(sample_rate: u32, min_hz: f64, max_hz: f64) -> (usize, usize) {
    let sr = f64::from(sample_rate);
    ((sr / max_hz).ceil().max(1.0) as usize, (sr / min_hz).floor() as usize)
}

pub fn autocorr_peak(x: &[f64], sample_rate: u32, min_hz: f64, max_hz: f64) -> f64 {
    let (lo, hi) = pitch_lag_range(sample_rate, min_hz, max_hz);
    let hi = hi.min(x.len().saturating_sub(1));
    if lo > hi {
        return 0.0;
    }
    let r = autocorrelation(x, hi);
    if r[0] <= 0.0 {
        return 0.0;
    }
    r[lo..=hi]
        .iter()
        .map(|v| (v / r[0]).clamp(-1.0, 1.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn time_features(clip: &AudioClip, cfg: &AudioConfig) -> Result<TimeFeatures> {
    let mut zcr = Vec::new();
    let mut rmse = Vec::new();
    for f in frames(&clip.samples, &cfg.frame)? {
        zcr.push(zero_crossing_rate(f));
        rmse.push(rms(f));
    }
    let max = rmse.iter().copied().fold(0.0, f64::max);
    let silence_ratio = if max <= 0.0 {
        1.0
    } else {
        let thr = cfg.silence_threshold * max;
        rmse.iter().filter(|&&r| r < thr).count() as f64 / rmse.len() as f64
    };
    Ok(TimeFeatures {
        zcr,
        rmse,
        silence_ratio,
        autocorr_peak: autocorr_peak(&clip.samples, clip.sample_rate, cfg.pitch_min_hz, cfg.pitch_max_hz),
    })
}
