//! Per-frame spectral shape, chroma and the HPSS harmonic ratio.

use super::stft::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralShape {
    pub centroid: f64,
    pub bandwidth: f64,
    pub rolloff: f64,
}

pub const CHROMA_MIN_HZ: f64 = 27.5;
/// Pitch-class names, class 0 = C.
pub const PITCH_CLASSES: [&str; 12] =
    ["C", "Cs", "D", "Ds", "E", "F", "Fs", "G", "Gs", "A", "As", "B"];

pub fn spectral_shape(spec: &Spectrogram, rolloff_fraction: f64) -> Vec<SpectralShape> {
    (0..spec.frames)
        .map(|t| {
            let m = spec.frame(t);
            let total: f64 = m.iter().sum();
            if total <= 0.0 {
                return SpectralShape {
                    centroid: 0.0,
                    bandwidth: 0.0,
                    rolloff: 0.0,
                };
            }
            let centroid = m.iter().enumerate().map(|(k, a)| spec.bin_hz(k) * a).sum::<f64>() / total;
            let var = m
                .iter()
                .enumerate()
                .map(|(k, a)| (spec.bin_hz(k) - centroid).powi(2) * a)
                .sum::<f64>()
                / total;
            let target = rolloff_fraction * total;
            let mut acc = 0.0;
            let mut rolloff = spec.bin_hz(spec.bins - 1);
            for (k, a) in m.iter().enumerate() {
                acc += a;
                if acc >= target {
                    rolloff = spec.bin_hz(k);
                    break;
                }
            }
            SpectralShape {
                centroid,
                bandwidth: var.sqrt(),
                rolloff,
            }
        })
        .collect()
}

pub fn pitch_class(f: f64) -> usize {
    let semis = (12.0 * (f / 440.0).log2()).round() as i64;
    (semis + 9).rem_euclid(12) as usize
}

/// Frames × 12 chroma energies, each frame scaled so its maximum is 1.
pub fn chroma_stft(spec: &Spectrogram) -> Vec<[f64; 12]> {
    let classes: Vec<Option<usize>> = (0..spec.bins)
        .map(|k| {
            let f = spec.bin_hz(k);
            (f > CHROMA_MIN_HZ).then(|| pitch_class(f))
        })
        .collect();
    (0..spec.frames)
        .map(|t| {
            let mut c = [0.0; 12];
            for (a, cls) in spec.frame(t).iter().zip(&classes) {
                if let Some(p) = cls {
                    c[*p] += a * a;
                }
            }
            let max = c.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                c.iter_mut().for_each(|v| *v /= max);
            }
            c
        })
        .collect()
}

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

/// Median filter of one strided line with edge replication.
fn median_line(get: impl Fn(usize) -> f64, len: usize, width: usize, out: &mut [f64]) {
    let half = (width / 2) as isize;
    let mut buf = vec![0.0; width];
    for (i, o) in out.iter_mut().enumerate().take(len) {
        for (j, b) in buf.iter_mut().enumerate() {
            let idx = (i as isize + j as isize - half).clamp(0, len as isize - 1);
            *b = get(idx as usize);
        }
        *o = median(&mut buf);
    }
}

pub const HPSS_WIDTH: usize = 9;

/// Share of spectral energy assigned to the harmonic component by a soft
/// median-filter mask. Silence yields 0.
pub fn harmonic_ratio(spec: &Spectrogram) -> f64 {
    let (nt, nb) = (spec.frames, spec.bins);
    let total: f64 = spec.mag.iter().map(|m| m * m).sum();
    if nt == 0 || nb == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut harm = vec![0.0; nt * nb];
    let mut line = vec![0.0; nt];
    for k in 0..nb {
        median_line(|t| spec.mag[t * nb + k], nt, HPSS_WIDTH, &mut line);
        for t in 0..nt {
            harm[t * nb + k] = line[t];
        }
    }
    let mut perc = vec![0.0; nt * nb];
    for t in 0..nt {
        let row = spec.frame(t);
        median_line(|k| row[k], nb, HPSS_WIDTH, &mut perc[t * nb..(t + 1) * nb]);
    }
    let masked: f64 = spec
        .mag
        .iter()
        .zip(harm.iter().zip(&perc))
        .map(|(m, (h, p))| {
            let mask = h * h / (h * h + p * p + 1e-10);
            mask * m * m
        })
        .sum();
    (masked / total).clamp(0.0, 1.0)
}
