//! Mel filterbank, orthonormal DCT and delta features.

use std::f64::consts::PI;

use super::stft::Spectrogram;
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-scale filters spanning 0 Hz to Nyquist, each scaled to
/// unit area in Hz.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub bins: usize,
    /// `n_mels + 2` edge frequencies in Hz.
    pub edges_hz: Vec<f64>,
    /// Row-major `n_mels × bins`.
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_size: usize, sample_rate: u32) -> Result<Self> {
        if n_mels == 0 || fft_size < 2 {
            return Err(Error::invalid("mel filterbank needs n_mels >= 1 and fft_size >= 2"));
        }
        let sr = f64::from(sample_rate);
        let bins = fft_size / 2 + 1;
        let top = hz_to_mel(sr / 2.0);
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut weights = vec![0.0; n_mels * bins];
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            let norm = 2.0 / (hi - lo);
            for k in 0..bins {
                let f = k as f64 * sr / fft_size as f64;
                let up = (f - lo) / (mid - lo);
                let down = (hi - f) / (hi - mid);
                weights[m * bins + k] = up.min(down).max(0.0) * norm;
            }
        }
        Ok(Self {
            n_mels,
            bins,
            edges_hz,
            weights,
        })
    }

    /// Filter energies of one power-spectrum frame.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.bins)
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormal DCT-II.
pub fn dct2_ortho(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            s * x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Inverse of [`dct2_ortho`] (orthonormal DCT-III).
pub fn idct2_ortho(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                    s * v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos()
                })
                .sum()
        })
        .collect()
}

/// Log mel energies per frame, `frames × n_mels`.
pub fn log_mel(spec: &Spectrogram, n_mels: usize) -> Result<Vec<Vec<f64>>> {
    if spec.frames == 0 {
        return Err(Error::EmptyInput);
    }
    let fb = MelFilterbank::new(n_mels, spec.fft_size, spec.sample_rate)?;
    Ok((0..spec.frames)
        .map(|t| {
            let power: Vec<f64> = spec.frame(t).iter().map(|m| m * m).collect();
            fb.apply(&power).into_iter().map(|e| (e + LOG_FLOOR).ln()).collect()
        })
        .collect())
}

/// Least-squares slope over a symmetric window with edge replication.
/// `series` is `frames × dims`.
pub fn deltas(series: &[Vec<f64>], width: usize) -> Result<Vec<Vec<f64>>> {
    if width < 3 || width % 2 == 0 {
        return Err(Error::invalid(format!("delta width must be odd and >= 3, got {width}")));
    }
    let half = (width / 2) as isize;
    let denom: f64 = 2.0 * (1..=half).map(|n| (n * n) as f64).sum::<f64>();
    let last = series.len() as isize - 1;
    let at = |t: isize| &series[t.clamp(0, last) as usize];
    Ok((0..series.len() as isize)
        .map(|t| {
            let dims = series[t as usize].len();
            (0..dims)
                .map(|d| {
                    (1..=half)
                        .map(|n| n as f64 * (at(t + n)[d] - at(t - n)[d]))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect())
}

/// Per frame: `n_mfcc` cepstral coefficients followed by their deltas.
pub fn mfcc_with_delta(
    spec: &Spectrogram,
    n_mels: usize,
    n_mfcc: usize,
    delta_width: usize,
) -> Result<Vec<Vec<f64>>> {
    if n_mfcc == 0 || n_mfcc > n_mels {
        return Err(Error::invalid(format!("need 1 <= n_mfcc ({n_mfcc}) <= n_mels ({n_mels})")));
    }
    let cep: Vec<Vec<f64>> = log_mel(spec, n_mels)?
        .iter()
        .map(|e| {
            let mut c = dct2_ortho(e);
            c.truncate(n_mfcc);
            c
        })
        .collect();
    let d = deltas(&cep, delta_width)?;
    Ok(cep
        .into_iter()
        .zip(d)
        .map(|(mut c, d)| {
            c.extend(d);
            c
        })
        .collect())
}
