//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails. Runs without the libtest harness so the lines are
//! always printed. Criterion numbers given as arguments select a subset.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fusent::audio::mfcc::deltas;
use fusent::audio::spectral::spectral_shape;
use fusent::audio::stft::hann;
use fusent::audio::{stft_magnitude, AudioClip, FrameConfig};
use fusent::config::{ModelKind, RunConfig};
use fusent::data::{class_counts, FeatureMatrix, LabeledDataset, SplitTag};
use fusent::gbdt::{find_best_split, gbdt_fit, gbdt_fit_traced, GbdtConfig};
use fusent::neural::{checkpoint, AdamState, Batch, BranchSpec, FusionModel, LayerSpec, Mode, ModelSpec};
use fusent::pipeline::{self, Prepared, RunLayout, CHECKPOINT_FILE, REPORT_FILE};
use fusent::resample::{
    expected_counts, oversample_indices, stratified_split_tags, SplitFractions, TargetCounts,
};
use fusent::synth::{generate, write_corpus, SynthSpec};
use fusent::train::{
    self, accuracy, binary_auc, confusion_matrix, evaluate_probs, log_loss, predictions, prf_scores, roc_auc,
    train_loop, EpochMetrics, EpochRunner, SplitViews, TrainConfig,
};
use fusent::SeededRng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient correctness", Box::new(gradient_check)),
        ("optimizer oracle", Box::new(adam_oracle)),
        ("metric oracles", Box::new(metric_oracles)),
        ("dsp oracle", Box::new(dsp_oracle)),
        ("gbdt laws", Box::new(gbdt_laws)),
        ("resampling exactness", Box::new(resampling)),
        ("callback semantics", Box::new(callbacks)),
        ("end-to-end synthetic run", Box::new(|| end_to_end(work.path()))),
        ("reproducibility", Box::new(|| reproducibility(work.path()))),
        ("checkpoint roundtrip", Box::new(|| checkpoint_roundtrip(work.path()))),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({detail}; {secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// 1

fn small_spec(bn: bool) -> ModelSpec {
    ModelSpec {
        branches: vec![
            BranchSpec {
                name: "audio".into(),
                input_width: 3,
                layers: vec![LayerSpec::new(4, 0.3, bn)],
            },
            BranchSpec {
                name: "video".into(),
                input_width: 3,
                layers: vec![LayerSpec::new(4, 0.3, bn), LayerSpec::new(3, 0.0, bn)],
            },
            BranchSpec {
                name: "text".into(),
                input_width: 2,
                layers: vec![LayerSpec::new(3, 0.3, false)],
            },
        ],
        head: vec![LayerSpec::new(5, 0.4, false)],
        n_classes: 6,
    }
}

/// Relative-error denominator floor, above central-difference roundoff
/// (one ulp of the loss over 2h is about 1e-11).
const DENOM_FLOOR: f64 = 1e-5;

fn max_relative_error(model: &FusionModel, batch: &Batch, mode: Mode, seed: u64) -> f64 {
    let pass = model.forward(batch, mode, &mut SeededRng::new(seed)).unwrap();
    let masks = pass.masks();
    let grads = model.backward(&pass, &batch.labels).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let h = 1e-5;
    let mut m = model.clone();
    let loss_at = |m: &FusionModel| {
        let p = m.forward_with_masks(batch, mode, &masks).unwrap();
        m.loss(&p, &batch.labels).unwrap()
    };
    let mut worst: f64 = 0.0;
    for (ti, g) in analytic.iter().enumerate() {
        for (i, &gi) in g.iter().enumerate() {
            let orig = m.trainable()[ti][i];
            m.trainable_mut()[ti][i] = orig + h;
            let up = loss_at(&m);
            m.trainable_mut()[ti][i] = orig - h;
            let down = loss_at(&m);
            m.trainable_mut()[ti][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((gi - numeric).abs() / gi.abs().max(numeric.abs()).max(DENOM_FLOOR));
        }
    }
    worst
}

fn gradient_check() -> Outcome {
    let mut rng = SeededRng::new(12);
    let rows = 4;
    let batch = Batch {
        rows,
        inputs: [3, 3, 2]
            .iter()
            .map(|w| (0..rows * w).map(|_| rng.gaussian()).collect())
            .collect(),
        labels: vec![0, 5, 4, 3],
    };
    let mut worst: f64 = 0.0;
    let mut params = 0;
    for bn in [false, true] {
        let mut model = FusionModel::init(&small_spec(bn), &mut SeededRng::new(11)).map_err(|e| e.to_string())?;
        params = params.max(model.n_parameters());
        ensure!(model.n_parameters() <= 300, "{} parameters", model.n_parameters());
        let mut jitter = SeededRng::new(13);
        for t in model.trainable_mut() {
            t.iter_mut().for_each(|v| *v += jitter.uniform(-0.1, 0.1));
        }
        for mode in [Mode::Train, Mode::Eval] {
            for seed in 0..10 {
                let e = max_relative_error(&model, &batch, mode, seed);
                ensure!(e < 1e-5, "batch_norm={bn} {mode:?} mask seed {seed}: relative error {e:e}");
                worst = worst.max(e);
            }
        }
    }
    Ok(format!("{params} params, max relative error {worst:.2e}"))
}

// 2

fn adam_oracle() -> Outcome {
    let (lr, b1, b2, eps) = (1e-3f64, 0.9f64, 0.999f64, 1e-8f64);
    let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut state = AdamState::new(lr, &[1]);
    let mut theta = vec![1.0];
    let mut worst: f64 = 0.0;
    let mut first_step = 0.0;
    for t in 1..=20 {
        let g = 2.0 * th;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        th -= lr * mh / (vh.sqrt() + eps);

        let before = theta[0];
        let grad = vec![2.0 * theta[0]];
        state
            .step(&mut [theta.as_mut_slice()], &[grad.as_slice()])
            .map_err(|e| e.to_string())?;
        if t == 1 {
            first_step = (theta[0] - before).abs();
        }
        worst = worst.max((theta[0] - th).abs());
    }
    ensure!(worst <= 1e-12, "trajectory deviates by {worst:e}");
    ensure!((first_step - lr).abs() < 1e-10, "first step {first_step} vs lr {lr}");
    Ok(format!("max deviation {worst:.1e}, first step {first_step:.12}"))
}

// 3

fn metric_oracles() -> Outcome {
    let mut rng = SeededRng::new(31);
    let n = 500;
    let scores: Vec<f64> = (0..n).map(|_| (rng.uniform(0.0, 1.0) * 50.0).floor() / 50.0).collect();
    let positive: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
    let (mut wins2, mut pairs) = (0u64, 0u64);
    for i in (0..n).filter(|&i| positive[i]) {
        for j in (0..n).filter(|&j| !positive[j]) {
            pairs += 1;
            wins2 += match scores[i].total_cmp(&scores[j]) {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    let brute = wins2 as f64 / (2 * pairs) as f64;
    let auc = binary_auc(&scores, &positive).ok_or("AUC undefined")?;
    ensure!(auc == brute, "binary AUC {auc} vs brute force {brute}");

    let k = 3;
    let y: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    let probs: Vec<f64> = (0..n)
        .flat_map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| rng.uniform(0.01, 1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(move |r| r / s)
        })
        .collect();
    let summary = roc_auc(&probs, &y, k).map_err(|e| e.to_string())?;
    for c in 0..k {
        let sc: Vec<f64> = (0..n).map(|i| probs[i * k + c]).collect();
        let pos: Vec<bool> = y.iter().map(|&t| t == c).collect();
        let mut w = 0u64;
        let mut p = 0u64;
        for i in (0..n).filter(|&i| pos[i]) {
            for j in (0..n).filter(|&j| !pos[j]) {
                p += 1;
                w += 2 * u64::from(sc[i] > sc[j]) + u64::from(sc[i] == sc[j]);
            }
        }
        let brute = w as f64 / (2 * p) as f64;
        ensure!(summary.auc[c] == Some(brute), "class {c}: {:?} vs {brute}", summary.auc[c]);
    }

    let pred = predictions(&probs, k);
    let cm = confusion_matrix(&y, &pred, k).map_err(|e| e.to_string())?;
    let trace: usize = (0..k).map(|c| cm[c][c]).sum();
    let total: usize = cm.iter().flatten().sum();
    ensure!(accuracy(&cm) == trace as f64 / total as f64, "accuracy is not trace/total");
    let direct = y.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / n as f64;
    ensure!(accuracy(&cm) == direct, "accuracy disagrees with direct count");

    let s = prf_scores(&[vec![2, 0], vec![1, 1]]);
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
    ensure!(close(&s.precision, &[2.0 / 3.0, 1.0]), "precision {:?}", s.precision);
    ensure!(close(&s.recall, &[1.0, 0.5]), "recall {:?}", s.recall);
    ensure!(close(&s.f1, &[0.8, 2.0 / 3.0]), "f1 {:?}", s.f1);

    let uniform = vec![1.0 / 6.0; 6 * 60];
    let labels: Vec<usize> = (0..60).map(|i| i % 6).collect();
    let ll = log_loss(&uniform, &labels, 6).map_err(|e| e.to_string())?;
    ensure!((ll - 6f64.ln()).abs() < 1e-9, "uniform log loss {ll}");
    Ok(format!("AUC {auc:.6} exact, uniform log loss {ll:.12}"))
}

// 4

fn dsp_oracle() -> Outcome {
    let sr = 16_000;
    let mut rng = SeededRng::new(41);
    let x: Vec<f64> = (0..4096).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let cfg = FrameConfig::default();
    let spec = stft_magnitude(&AudioClip::new(x.clone(), sr).unwrap(), &cfg).map_err(|e| e.to_string())?;
    ensure!(cfg.frame_length == 1024, "frame length {}", cfg.frame_length);
    let w = hann(1024);
    let mut worst: f64 = 0.0;
    for t in 0..spec.frames {
        let frame: Vec<f64> = (0..1024).map(|i| x[t * cfg.hop_length + i] * w[i]).collect();
        for k in 0..spec.bins {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in frame.iter().enumerate() {
                let a = -2.0 * PI * ((k * n) % 1024) as f64 / 1024.0;
                re += v * a.cos();
                im += v * a.sin();
            }
            worst = worst.max((spec.frame(t)[k] - re.hypot(im)).abs());
        }
    }
    ensure!(worst < 1e-6, "STFT deviates from the DFT by {worst:e}");

    let tone: Vec<f64> = (0..8000)
        .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / f64::from(sr)).sin())
        .collect();
    let spec = stft_magnitude(&AudioClip::new(tone, sr).unwrap(), &cfg).map_err(|e| e.to_string())?;
    let width = spec.bin_width();
    let mut off: f64 = 0.0;
    for s in spectral_shape(&spec, 0.85) {
        off = off.max((s.centroid - 440.0).abs());
    }
    ensure!(off <= width, "centroid {off} Hz away from 440 Hz (bin width {width})");

    let constant = vec![vec![0.7, -1.25, 3.0]; 25];
    let d = deltas(&constant, 9).map_err(|e| e.to_string())?;
    ensure!(d.iter().flatten().all(|&v| v == 0.0), "constant deltas are not zero");
    Ok(format!("max |STFT - DFT| {worst:.1e}, centroid within {off:.2} Hz"))
}

// 5

fn blobs(n: usize, k: usize, dims: usize, sep: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = SeededRng::new(seed);
    let mut v = Vec::with_capacity(n * dims);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for d in 0..dims {
            v.push(if d % k == c { sep } else { 0.0 } + rng.gaussian());
        }
        y.push(c);
    }
    (FeatureMatrix::with_prefix(n, dims, v, "f").unwrap(), y)
}

fn brute_force_split(x: &FeatureMatrix, g: &[f64], h: &[f64], cfg: &GbdtConfig) -> Option<(usize, f64, f64)> {
    let n = x.rows();
    let lambda = cfg.l2_reg;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.cols() {
        let mut vals = x.column(f);
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let mid = w[0] + (w[1] - w[0]) * 0.5;
            let t = if mid > w[0] && mid < w[1] { mid } else { w[1] };
            let (mut gl, mut hl, mut gr, mut hr, mut nl) = (0.0, 0.0, 0.0, 0.0, 0);
            for i in 0..n {
                if x.get(i, f) < t {
                    gl += g[i];
                    hl += h[i];
                    nl += 1;
                } else {
                    gr += g[i];
                    hr += h[i];
                }
            }
            if nl < cfg.min_samples_leaf || n - nl < cfg.min_samples_leaf {
                continue;
            }
            let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - (gl + gr).powi(2) / (hl + hr + lambda));
            if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

fn gbdt_laws() -> Outcome {
    let (x, y) = blobs(300, 6, 8, 1.5, 51);
    let cfg = GbdtConfig::default();
    ensure!(cfg.n_rounds == 50, "default rounds {}", cfg.n_rounds);
    let (model, trace) = gbdt_fit_traced(&x, &y, 6, &cfg, &mut SeededRng::new(1)).map_err(|e| e.to_string())?;
    ensure!(trace.loss.len() == 51, "{} loss entries", trace.loss.len());
    for (r, w) in trace.loss.windows(2).enumerate() {
        ensure!(w[1] <= w[0], "loss rose at round {}: {} -> {}", r + 1, w[0], w[1]);
    }

    let mut checked = 0;
    for seed in 0..25u64 {
        let mut rng = SeededRng::new(seed);
        let n = 20 + rng.below(181);
        let (xs, ys) = blobs(n, 3, 4, 1.0, 500 + seed);
        let p: Vec<f64> = ys.iter().map(|_| rng.uniform(0.01, 0.99)).collect();
        let g: Vec<f64> = ys.iter().zip(&p).map(|(&c, &p)| p - f64::from(u8::from(c == 0))).collect();
        let h: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let c = GbdtConfig {
            min_samples_leaf: 1 + rng.below(5),
            ..GbdtConfig::default()
        };
        let rows: Vec<usize> = (0..n).collect();
        match (find_best_split(&xs, &g, &h, &rows, &c), brute_force_split(&xs, &g, &h, &c)) {
            (Some(a), Some((f, t, gain))) => {
                ensure!((a.feature, a.threshold) == (f, t), "seed {seed}: ({}, {}) vs ({f}, {t})", a.feature, a.threshold);
                ensure!((a.gain - gain).abs() <= 1e-9 * gain.max(1.0), "seed {seed}: gain {} vs {gain}", a.gain);
            }
            (None, None) => {}
            other => return Err(format!("seed {seed}: {other:?}")),
        }
        checked += 1;
    }

    let proba = model.predict_proba(&x).map_err(|e| e.to_string())?;
    for (r, row) in proba.chunks_exact(6).enumerate() {
        let s: f64 = row.iter().sum();
        ensure!((s - 1.0).abs() <= 1e-9, "row {r} sums to {s}");
    }

    let small = GbdtConfig {
        n_rounds: 9,
        ..GbdtConfig::default()
    };
    let m = gbdt_fit(&x, &y, 6, &small, &mut SeededRng::new(2)).map_err(|e| e.to_string())?;
    let oh = m.leaf_one_hot(&x).map_err(|e| e.to_string())?;
    for (r, row) in oh.iter_rows().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let nonzero = row.iter().filter(|&&v| v != 0.0).count();
        ensure!(ones == 9 * 6 && nonzero == ones, "row {r}: {ones} ones, {nonzero} non-zero");
    }
    Ok(format!(
        "loss {:.4} -> {:.4}, {checked} split searches match brute force",
        trace.loss[0], trace.loss[50]
    ))
}

// 6

fn resampling() -> Outcome {
    let sizes = [900usize, 1400, 3100, 600, 2000, 4100];
    let mut labels = Vec::new();
    for (c, &s) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(c, s));
    }
    let n = labels.len();
    let col = |scale: f64| FeatureMatrix::with_prefix(n, 1, (0..n).map(|i| i as f64 * scale).collect(), "f").unwrap();
    let ds = LabeledDataset::new(col(1.0), col(-2.0), col(0.5), labels.clone()).map_err(|e| e.to_string())?;
    let tags = stratified_split_tags(&labels, &SplitFractions::default(), &mut SeededRng::new(61))
        .map_err(|e| e.to_string())?;
    let ds = ds.with_tags(tags).map_err(|e| e.to_string())?;
    let train_rows = ds.indices_with_tag(SplitTag::Train);
    let targets = TargetCounts::default();
    ensure!(
        targets.as_slice() == [2933, 2933, 5000, 2933, 2933, 4000],
        "target table {:?}",
        targets.as_slice()
    );
    let before = class_counts(&train_rows.iter().map(|&i| labels[i]).collect::<Vec<_>>(), 6);
    let plan = oversample_indices(&labels, &train_rows, &targets, &mut SeededRng::new(62)).map_err(|e| e.to_string())?;
    let out = ds.select_rows(&plan);
    let got = class_counts(&out.labels, 6);
    for c in 0..6 {
        let want = before[c].max(targets.as_slice()[c]);
        ensure!(got[c] == want, "class {c}: {} rows, want max({}, {}) = {want}", got[c], before[c], targets.as_slice()[c]);
    }
    ensure!(
        got == expected_counts(&train_rows.iter().map(|&i| labels[i]).collect::<Vec<_>>(), &targets),
        "expected_counts disagrees"
    );
    ensure!(before.iter().zip(targets.as_slice()).any(|(b, t)| b < t), "split is not deficient");
    ensure!(out.split_tag.as_ref().unwrap().iter().all(|&t| t == SplitTag::Train), "plan left the training split");
    for r in 0..out.len() {
        let src = out.text.get(r, 0);
        let i = src as usize;
        ensure!(
            out.audio.get(r, 0) == -2.0 * src && out.video.get(r, 0) == 0.5 * src && out.labels[r] == labels[i],
            "row {r} misaligned"
        );
    }
    for tag in [SplitTag::Val, SplitTag::Test] {
        ensure!(!plan.iter().any(|&i| ds.split_tag.as_ref().unwrap()[i] == tag), "{tag:?} row in plan");
    }
    let val = ds.subset(SplitTag::Val);
    let test = ds.subset(SplitTag::Test);
    Ok(format!(
        "train {:?} -> {:?}, val {} and test {} rows untouched",
        before,
        got,
        val.len(),
        test.len()
    ))
}

// 7

struct Scripted {
    losses: Vec<f64>,
    weights: usize,
    saved: usize,
}

impl EpochRunner for Scripted {
    fn run_epoch(&mut self, epoch: usize, _lr: f64) -> fusent::Result<EpochMetrics> {
        self.weights = epoch;
        let v = self.losses[epoch - 1];
        Ok(EpochMetrics {
            train_loss: v,
            train_acc: 0.0,
            val_loss: v,
            val_acc: 0.0,
        })
    }
    fn save_best(&mut self, epoch: usize) -> fusent::Result<()> {
        self.saved = epoch;
        Ok(())
    }
    fn restore_best(&mut self) -> fusent::Result<()> {
        self.weights = self.saved;
        Ok(())
    }
}

fn callbacks() -> Outcome {
    let mut losses = vec![1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95];
    losses.extend(vec![0.1; 43]);
    let mut r = Scripted {
        losses,
        weights: 0,
        saved: 0,
    };
    let h = train_loop(&mut r, &TrainConfig::default()).map_err(|e| e.to_string())?;
    ensure!(h.records.len() == 7 && h.stopped_early, "stopped after {} epochs", h.records.len());
    ensure!(h.best_epoch == 2 && r.weights == 2, "restored epoch {} (best {})", r.weights, h.best_epoch);

    let cfg = TrainConfig {
        early_stop_patience: 50,
        ..TrainConfig::default()
    };
    let mut r = Scripted {
        losses: vec![1.0; 50],
        weights: 0,
        saved: 0,
    };
    let h = train_loop(&mut r, &cfg).map_err(|e| e.to_string())?;
    let first_halved = h.records.iter().find(|e| e.lr < cfg.lr).map(|e| e.epoch);
    ensure!(first_halved == Some(5), "lr first halved at epoch {first_halved:?}");
    ensure!(h.records[4].lr == cfg.lr * 0.5, "epoch 5 lr {}", h.records[4].lr);
    Ok(format!("stop after 7 restoring epoch 2, lr halves at epoch {}", first_halved.unwrap()))
}

// 8-10

fn synthetic_config(root: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.oversample.targets = cfg.oversample.targets.scaled(0.2);
    cfg.resolve_paths(root);
    cfg
}

fn run_dir(base: &Path, name: &str) -> PathBuf {
    base.join(name)
}

fn full_run(root: &Path) -> Result<(RunConfig, pipeline::RunSummary), String> {
    let spec = SynthSpec::default();
    let corpus = generate(&spec).map_err(|e| e.to_string())?;
    write_corpus(&corpus, &root.join("corpus")).map_err(|e| e.to_string())?;
    let cfg = synthetic_config(root);
    let summary = pipeline::run_all(&cfg).map_err(|e| e.to_string())?;
    Ok((cfg, summary))
}

fn end_to_end(base: &Path) -> Outcome {
    let start = Instant::now();
    let (cfg, summary) = full_run(&run_dir(base, "a"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure!(cfg.train.epochs <= 50, "epoch budget {}", cfg.train.epochs);
    let acc = |k: ModelKind| summary.reports.iter().find(|(m, _)| *m == k).map(|(_, r)| r.accuracy);
    let fused = acc(ModelKind::Fused).ok_or("no fused report")?;
    ensure!(fused >= 0.90, "fused accuracy {fused:.4} < 0.90");
    let mut parts = vec![format!("fused {fused:.3}")];
    for k in [ModelKind::Text, ModelKind::Audio, ModelKind::Video] {
        let a = acc(k).ok_or(format!("no {k} report"))?;
        ensure!(a <= fused - 0.05, "{k} accuracy {a:.4} is within 5 points of fused {fused:.4}");
        parts.push(format!("{k} {a:.3}"));
    }
    let early = acc(ModelKind::Early).ok_or("no early report")?;
    ensure!(early <= fused, "early fusion {early:.4} beats fused {fused:.4}");
    parts.push(format!("early {early:.3}"));
    ensure!(secs < 600.0, "took {secs:.0}s");
    Ok(format!("{}, {secs:.0}s", parts.join(", ")))
}

fn artifacts(layout: &RunLayout) -> Vec<PathBuf> {
    [
        ModelKind::Fused,
        ModelKind::Text,
        ModelKind::Audio,
        ModelKind::Video,
        ModelKind::Early,
        ModelKind::LateSimple,
    ]
    .iter()
    .flat_map(|&k| {
        let d = layout.model_dir(k);
        [d.join("history.csv"), d.join(REPORT_FILE), d.join(CHECKPOINT_FILE)]
    })
    .collect()
}

fn reproducibility(base: &Path) -> Outcome {
    let a = RunLayout::new(&run_dir(base, "a").join("run"));
    ensure!(a.checkpoint(ModelKind::Fused).exists(), "first run missing (criterion 8 did not complete)");
    full_run(&run_dir(base, "b"))?;
    let b = RunLayout::new(&run_dir(base, "b").join("run"));
    let files = artifacts(&a);
    for (fa, fb) in files.iter().zip(artifacts(&b)) {
        let x = std::fs::read(fa).map_err(|e| format!("{}: {e}", fa.display()))?;
        let y = std::fs::read(&fb).map_err(|e| format!("{}: {e}", fb.display()))?;
        ensure!(x == y, "{} differs between runs", fa.strip_prefix(&a.root).unwrap_or(fa).display());
    }
    Ok(format!("{} files byte-identical", files.len()))
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn checkpoint_roundtrip(base: &Path) -> Outcome {
    let root = run_dir(base, "a");
    let cfg = synthetic_config(&root);
    let layout = RunLayout::new(&cfg.paths.work_dir);
    let outcome = pipeline::train_model(&cfg, ModelKind::Fused).map_err(|e| e.to_string())?;
    let loaded = checkpoint::load(&layout.checkpoint(ModelKind::Fused)).map_err(|e| e.to_string())?;
    let p = Prepared::load(&layout.prepared()).map_err(|e| e.to_string())?;
    let views = pipeline::model_views(&layout, ModelKind::Fused, p.labels.len()).map_err(|e| e.to_string())?;
    let refs: Vec<&FeatureMatrix> = views.iter().map(|(_, m)| m).collect();
    let all: Vec<usize> = (0..p.labels.len()).collect();
    let split = SplitViews {
        views: &refs,
        labels: &p.labels,
        rows: &all,
    };
    let mem = split.predict(&outcome.model).map_err(|e| e.to_string())?;
    let disk = split.predict(&loaded).map_err(|e| e.to_string())?;
    ensure!(bits(&mem) == bits(&disk), "predictions differ after reload");
    ensure!(checkpoint::encode(&loaded) == checkpoint::encode(&outcome.model), "re-encoded checkpoint differs");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("copy.bin");
    checkpoint::save(&path, &loaded).map_err(|e| e.to_string())?;
    let again = checkpoint::load(&path).map_err(|e| e.to_string())?;
    ensure!(bits(&split.predict(&again).map_err(|e| e.to_string())?) == bits(&mem), "second roundtrip differs");

    let test_rows = p.rows_with(SplitTag::Test);
    let test = SplitViews {
        views: &refs,
        labels: &p.labels,
        rows: &test_rows,
    };
    let a = train::evaluate(&outcome.model, &test).map_err(|e| e.to_string())?;
    let b = train::evaluate(&loaded, &test).map_err(|e| e.to_string())?;
    ensure!(a.to_json() == b.to_json(), "reports differ");
    let direct = evaluate_probs(&test.predict(&loaded).map_err(|e| e.to_string())?, &test.row_labels(), 6)
        .map_err(|e| e.to_string())?;
    ensure!(direct.to_json() == b.to_json(), "report differs from its predictions");
    Ok(format!("{} rows bit-exact, test accuracy {:.4}", mem.len() / 6, a.accuracy))
}
