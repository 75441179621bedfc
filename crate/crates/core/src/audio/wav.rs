//! RIFF/WAVE reading and writing, restricted to 16-bit PCM.
//!
//! Multi-channel input is averaged down to mono. `WAVE_FORMAT_EXTENSIBLE`
//! headers are accepted when their sub-format is PCM.

use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};
use crate::fsutil;

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

struct Fmt {
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::format("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::format("fmt chunk too short"));
                }
                let mut tag = u16_at(body, 0);
                if tag == FORMAT_EXTENSIBLE && body.len() >= 26 {
                    tag = u16_at(body, 24);
                }
                if tag != FORMAT_PCM {
                    return Err(Error::format(format!("unsupported WAV format tag {tag:#06x}")));
                }
                fmt = Some(Fmt {
                    channels: u16_at(body, 2),
                    sample_rate: u32_at(body, 4),
                    bits: u16_at(body, 14),
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are padded to even length
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::format("missing fmt chunk"))?;
    let data = data.ok_or_else(|| Error::format("missing data chunk"))?;
    if fmt.bits != 16 {
        return Err(Error::format(format!("only 16-bit PCM is supported, got {} bits", fmt.bits)));
    }
    if fmt.channels == 0 || fmt.sample_rate == 0 {
        return Err(Error::format("invalid channel count or sample rate"));
    }
    let ch = usize::from(fmt.channels);
    let frame_bytes = 2 * ch;
    let samples = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f64 = frame
                .chunks_exact(2)
                .map(|s| f64::from(i16::from_le_bytes([s[0], s[1]])) / 32768.0)
                .sum();
            sum / ch as f64
        })
        .collect();
    AudioClip::new(samples, fmt.sample_rate)
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    decode_wav(&fsutil::read_bytes(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// 16-bit mono PCM encoding; samples are clipped to [-1, 1].
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let n = clip.samples.len();
    let data_len = (2 * n) as u32;
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    fsutil::write_atomic(path, &encode_wav(clip))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_within_quantisation() {
        let samples: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin() * 0.8).collect();
        let clip = AudioClip::new(samples.clone(), 16_000).unwrap();
        let back = decode_wav(&encode_wav(&clip)).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.samples.len(), 100);
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 16_000.0);
        }
    }

    fn stereo_bytes(left: i16, right: i16, extra_chunk: bool) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF\0\0\0\0WAVE");
        if extra_chunk {
            b.extend_from_slice(b"LIST");
            b.extend_from_slice(&3u32.to_le_bytes());
            b.extend_from_slice(&[1, 2, 3, 0]); // odd size + pad byte
        }
        b.extend_from_slice(b"fmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&2u16.to_le_bytes());
        b.extend_from_slice(&8000u32.to_le_bytes());
        b.extend_from_slice(&32000u32.to_le_bytes());
        b.extend_from_slice(&4u16.to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&8u32.to_le_bytes());
        for _ in 0..2 {
            b.extend_from_slice(&left.to_le_bytes());
            b.extend_from_slice(&right.to_le_bytes());
        }
        b
    }

    #[test]
    fn stereo_downmix_and_chunk_skipping() {
        let clip = decode_wav(&stereo_bytes(16384, -16384, true)).unwrap();
        assert_eq!(clip.sample_rate, 8000);
        assert_eq!(clip.samples, vec![0.0, 0.0]);
        let clip = decode_wav(&stereo_bytes(16384, 16384, false)).unwrap();
        assert_eq!(clip.samples, vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_non_pcm16() {
        let mut b = stereo_bytes(0, 0, false);
        b[34] = 24; // bits per sample
        assert!(decode_wav(&b).is_err());
        assert!(decode_wav(b"RIFX0000WAVE").is_err());
    }
}
