//! Deterministic synthetic corpora with aligned transcripts, WAV clips and
//! motion-capture style descriptor tables.
//!
//! Every class has a transcript theme vocabulary, a tone set and a video
//! mean offset. Each modality can be made blind to a group of classes: the
//! classes listed in `text_confused` share one theme, those in
//! `audio_confused` share one tone set and those in `video_confused` share
//! one offset. The default rotates the blind pair ({0,1} for text, {2,3}
//! for audio, {4,5} for video) so only a model that combines modalities can
//! separate every class.
//!
//! Labels are emitted in the source id space of a [`LabelMap`]: the rows of
//! target class `c` cycle through the source ids mapping to `c`.
//!
//! Randomness is drawn from per-sample substreams, so sample `i` does not
//! depend on how many samples precede it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioClip};
use crate::data::table::to_csv;
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::fsutil::{ensure_dir, write_atomic};
use crate::resample::LabelMap;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    /// Samples per target class; its length is the class count.
    pub counts: Vec<usize>,
    /// Distance between any two distinct video class means.
    pub separation: f64,
    pub text_confused: Vec<usize>,
    pub audio_confused: Vec<usize>,
    pub video_confused: Vec<usize>,
    pub label_map: LabelMap,
    pub tokens_min: usize,
    pub tokens_max: usize,
    pub theme_words: usize,
    pub filler_words: usize,
    /// Probability that a token comes from the class theme.
    pub theme_prob: f64,
    pub sample_rate: u32,
    pub duration_secs: f64,
    pub noise_sigma: f64,
    /// Tone frequencies (Hz) per class.
    pub tones: Vec<Vec<f64>>,
    /// Relative per-sample frequency jitter.
    pub tone_jitter: f64,
    pub video_dim: usize,
    pub missing_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let tones = (0..6)
            .map(|c| {
                let f = 150.0 * 1.35f64.powi(c);
                vec![round2(f), round2(2.0 * f)]
            })
            .collect();
        Self {
            seed: 7,
            counts: vec![600; 6],
            separation: 4.0,
            text_confused: vec![0, 1],
            audio_confused: vec![2, 3],
            video_confused: vec![4, 5],
            label_map: LabelMap::default(),
            tokens_min: 5,
            tokens_max: 15,
            theme_words: 8,
            filler_words: 24,
            theme_prob: 0.6,
            sample_rate: 16_000,
            duration_secs: 1.0,
            noise_sigma: 0.05,
            tones,
            tone_jitter: 0.015,
            video_dim: 16,
            missing_rate: 0.05,
        }
    }
}

fn round2(f: f64) -> f64 {
    (f * 100.0).round() / 100.0
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn n_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes();
        if k < 2 || self.counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid("synth needs at least 2 classes, each with a positive count"));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::invalid("synth separation must be >= 0"));
        }
        if self.label_map.n_targets() != k {
            return Err(Error::invalid(format!(
                "label map produces {} classes but counts lists {k}",
                self.label_map.n_targets()
            )));
        }
        for (name, group) in [
            ("text_confused", &self.text_confused),
            ("audio_confused", &self.audio_confused),
            ("video_confused", &self.video_confused),
        ] {
            if let Some(&c) = group.iter().find(|&&c| c >= k) {
                return Err(Error::invalid(format!("{name} names class {c} but there are {k} classes")));
            }
        }
        if self.tokens_min == 0 || self.tokens_min > self.tokens_max || self.theme_words == 0 {
            return Err(Error::invalid("synth needs 1 <= tokens_min <= tokens_max and theme_words >= 1"));
        }
        if self.filler_words == 0 && self.theme_prob < 1.0 {
            return Err(Error::invalid("synth filler_words must be >= 1 when theme_prob < 1"));
        }
        if !(0.0..=1.0).contains(&self.theme_prob) || !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::invalid("synth theme_prob must lie in [0, 1] and missing_rate in [0, 1)"));
        }
        if self.tones.len() != k || self.tones.iter().any(|t| t.is_empty()) {
            return Err(Error::invalid(format!("synth tones must list a non-empty tone set for each of {k} classes")));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if self.tones.iter().flatten().any(|&f| !(f > 0.0 && f < nyquist)) {
            return Err(Error::invalid("synth tones must lie strictly between 0 Hz and Nyquist"));
        }
        if self.sample_rate == 0 || !(self.duration_secs > 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("synth audio needs a positive rate and duration and noise >= 0"));
        }
        if self.video_dim < k {
            return Err(Error::invalid(format!("synth video_dim must be >= {k} classes")));
        }
        Ok(())
    }

    /// The class whose signal `class` shows in a modality with the given
    /// confusion group.
    fn signal_class(group: &[usize], class: usize) -> usize {
        if group.contains(&class) {
            *group.iter().min().expect("non-empty group")
        } else {
            class
        }
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Theme word `j` of class `t`. Words end in a vowel so the bundled suffix
/// rules leave them intact.
pub fn theme_word(t: usize, j: usize) -> String {
    let c = |i: usize| CONSONANTS[i % CONSONANTS.len()] as char;
    let v = |i: usize| VOWELS[i % VOWELS.len()] as char;
    format!(
        "{}{}{}{}{}o",
        c(t),
        v(t / CONSONANTS.len()),
        c(j),
        v(j / CONSONANTS.len()),
        c(t + j + 5)
    )
}

pub fn filler_word(j: usize) -> String {
    let c = CONSONANTS[j % CONSONANTS.len()] as char;
    let v = VOWELS[(j / CONSONANTS.len()) % VOWELS.len()] as char;
    format!("qu{c}{v}ma")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub ids: Vec<String>,
    /// Target class per row.
    pub classes: Vec<usize>,
    /// Source label per row (what the manifest stores).
    pub labels: Vec<usize>,
    pub transcripts: Vec<String>,
    /// Missing cells are NaN.
    pub video: FeatureMatrix,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let k = spec.n_classes();
    let mut classes: Vec<usize> = (0..k).flat_map(|c| std::iter::repeat_n(c, spec.counts[c])).collect();
    SeededRng::substream(spec.seed, "order").shuffle(&mut classes);
    let preimages: Vec<Vec<usize>> = (0..k).map(|c| spec.label_map.preimage(c)).collect();
    let mut seen = vec![0usize; k];
    let labels: Vec<usize> = classes
        .iter()
        .map(|&c| {
            let p = &preimages[c];
            seen[c] += 1;
            p[(seen[c] - 1) % p.len()]
        })
        .collect();
    let n = classes.len();
    let ids: Vec<String> = (0..n).map(|i| format!("s{i:05}")).collect();
    let transcripts = (0..n).map(|i| transcript(spec, i, classes[i])).collect();
    let d = spec.video_dim;
    let scale = spec.separation / std::f64::consts::SQRT_2;
    let mut values = Vec::with_capacity(n * d);
    for (i, &c) in classes.iter().enumerate() {
        let sc = SynthSpec::signal_class(&spec.video_confused, c);
        let mut rng = SeededRng::substream(spec.seed, &format!("video/{i}"));
        for j in 0..d {
            let v = rng.gaussian() + if j == sc { scale } else { 0.0 };
            values.push(if rng.bernoulli(spec.missing_rate) { f64::NAN } else { v });
        }
    }
    Ok(SynthCorpus {
        spec: spec.clone(),
        ids,
        classes,
        labels,
        transcripts,
        video: FeatureMatrix::with_prefix(n, d, values, "v")?,
    })
}

fn transcript(spec: &SynthSpec, i: usize, class: usize) -> String {
    let theme = SynthSpec::signal_class(&spec.text_confused, class);
    let mut rng = SeededRng::substream(spec.seed, &format!("text/{i}"));
    let len = spec.tokens_min + rng.below(spec.tokens_max - spec.tokens_min + 1);
    let words: Vec<String> = (0..len)
        .map(|_| {
            if rng.bernoulli(spec.theme_prob) {
                theme_word(theme, rng.below(spec.theme_words))
            } else {
                filler_word(rng.below(spec.filler_words))
            }
        })
        .collect();
    words.join(" ")
}

impl SynthCorpus {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Audio of row `i`: the class tone set with jittered frequencies,
    /// random amplitudes and phases, plus Gaussian noise.
    pub fn clip(&self, i: usize) -> Result<AudioClip> {
        let spec = &self.spec;
        let sc = SynthSpec::signal_class(&spec.audio_confused, self.classes[i]);
        let mut rng = SeededRng::substream(spec.seed, &format!("audio/{i}"));
        let sr = f64::from(spec.sample_rate);
        let len = (spec.duration_secs * sr).round() as usize;
        let tones: Vec<(f64, f64, f64)> = spec.tones[sc]
            .iter()
            .map(|&f| {
                let f = f * (1.0 + rng.uniform(-spec.tone_jitter, spec.tone_jitter));
                let amp = rng.uniform(0.2, 0.35);
                let phase = rng.uniform(0.0, std::f64::consts::TAU);
                (f, amp, phase)
            })
            .collect();
        let norm = (tones.len() as f64).sqrt();
        let samples = (0..len)
            .map(|t| {
                let s: f64 = tones
                    .iter()
                    .map(|&(f, a, p)| a * (std::f64::consts::TAU * f * t as f64 / sr + p).sin())
                    .sum();
                (s / norm + spec.noise_sigma * rng.gaussian()).clamp(-1.0, 1.0)
            })
            .collect();
        AudioClip::new(samples, spec.sample_rate)
    }
}

/// Where [`write_corpus`] put things.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPaths {
    pub manifest: PathBuf,
    pub video: PathBuf,
    pub audio_dir: PathBuf,
}

pub const MANIFEST_HEADER: [&str; 4] = ["id", "clip_path", "label", "transcript"];

/// Writes `manifest.csv` (id, clip_path, label, transcript), `video.csv`
/// (row-aligned with the manifest, empty cells missing), `audio/<id>.wav`
/// and `spec.toml`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<CorpusPaths> {
    let audio_dir = dir.join("audio");
    ensure_dir(&audio_dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER).map_err(|e| Error::format(e.to_string()))?;
    for i in 0..corpus.len() {
        let rel = format!("audio/{}.wav", corpus.ids[i]);
        write_wav(&dir.join(&rel), &corpus.clip(i)?)?;
        w.write_record([
            corpus.ids[i].as_str(),
            rel.as_str(),
            corpus.labels[i].to_string().as_str(),
            corpus.transcripts[i].as_str(),
        ])
        .map_err(|e| Error::format(e.to_string()))?;
    }
    let manifest_bytes = w.into_inner().map_err(|e| Error::format(e.to_string()))?;
    let manifest = dir.join("manifest.csv");
    write_atomic(&manifest, &manifest_bytes)?;
    let video = dir.join("video.csv");
    let csv_text = to_csv(&corpus.video, None)?.replace("NaN", "");
    write_atomic(&video, csv_text.as_bytes())?;
    let spec_toml = toml::to_string(&corpus.spec).map_err(|e| Error::format(e.to_string()))?;
    write_atomic(&dir.join("spec.toml"), spec_toml.as_bytes())?;
    Ok(CorpusPaths {
        manifest,
        video,
        audio_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{normalize_text, TextNormConfig};

    fn small() -> SynthSpec {
        SynthSpec {
            counts: vec![20, 15, 10, 12, 9, 30],
            duration_secs: 0.25,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn counts_and_labels_follow_spec() {
        let c = generate(&small()).unwrap();
        let mut per = [0usize; 6];
        for &k in &c.classes {
            per[k] += 1;
        }
        assert_eq!(per, [20, 15, 10, 12, 9, 30]);
        let map = LabelMap::default();
        for (&src, &k) in c.labels.iter().zip(&c.classes) {
            assert_eq!(map.map(src).unwrap(), k);
        }
        assert!(c.labels.contains(&1) && c.labels.contains(&2));
        assert_eq!(c.video.rows(), c.len());
        assert!(c.video.values().iter().any(|v| v.is_nan()));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.transcripts, b.transcripts);
        assert_eq!(a.classes, b.classes);
        assert_eq!(
            a.video.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.video.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.clip(3).unwrap(), b.clip(3).unwrap());
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_corpus(&a, d1.path()).unwrap();
        write_corpus(&b, d2.path()).unwrap();
        for f in ["manifest.csv", "video.csv", "spec.toml", "audio/s00004.wav"] {
            assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
        }
    }

    #[test]
    fn words_survive_normalisation() {
        let cfg = TextNormConfig::bundled();
        let mut all = Vec::new();
        for t in 0..6 {
            for j in 0..8 {
                all.push(theme_word(t, j));
            }
        }
        for j in 0..24 {
            all.push(filler_word(j));
        }
        let joined = all.join(" ");
        assert_eq!(normalize_text(&joined, &cfg), all);
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), all.len());
    }

    #[test]
    fn confused_classes_share_signal() {
        let c = generate(&small()).unwrap();
        let theme_of = |i: usize| -> Vec<usize> {
            (0..6)
                .filter(|&t| (0..8).any(|j| c.transcripts[i].split(' ').any(|w| w == theme_word(t, j))))
                .collect()
        };
        for i in 0..c.len() {
            let themes = theme_of(i);
            let expect = if c.classes[i] == 1 { 0 } else { c.classes[i] };
            assert!(themes.iter().all(|&t| t == expect), "row {i}: {themes:?}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            SynthSpec { counts: vec![5], ..small() },
            SynthSpec { video_dim: 3, ..small() },
            SynthSpec { audio_confused: vec![9], ..small() },
            SynthSpec { tones: vec![vec![100.0]; 5], ..small() },
        ];
        for s in bad {
            assert!(generate(&s).is_err());
        }
    }
}
