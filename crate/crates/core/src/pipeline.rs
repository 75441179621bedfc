//! Stage orchestration over a work directory.
//!
//! ```text
//! <work_dir>/
//!   config.resolved.toml  seed.txt
//!   prepared/samples.csv      id, source_label, label, split
//!   prepared/train_plan.csv   oversampled training rows (manifest indices)
//!   features/<view>.csv       text, audio, video and their *_plain variants
//!   features/*.json           fitted transformers
//!   models/<model>/           ckpt_best.bin, history.csv, report.json, curves
//!   comparison.md
//! ```
//!
//! Transformers (vocabulary, selection, scalers, GBDTs) are fitted on the
//! unique training rows; the oversampling plan only affects which rows the
//! network sees. Enriched views carry the GBDT leaf one-hots (audio), the
//! stacked probabilities (video) and the selected vocabulary (text). Plain
//! views stop before those steps and feed the early and simple-late
//! baselines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;

use crate::audio::{extract_audio_matrix, read_wav, AudioClip, LeafEmbedder};
use crate::config::{ModelKind, RunConfig};
use crate::data::{
    concat_columns, load_table, save_table, zscore_apply, zscore_fit, FeatureMatrix, SplitTag, TableFormat,
    TableOptions,
};
use crate::error::{Error, Result};
use crate::fsutil::{ensure_dir, read_string, write_atomic};
use crate::neural::{checkpoint, FusionModel};
use crate::resample::{oversample_indices, remap_labels, stratified_split_tags};
use crate::rng::SeededRng;
use crate::text::{normalize_text, FittedText, TextNormConfig};
use crate::train::{self, export_history, export_report, train_loop, EvalReport, FusionRunner, SplitViews, TrainHistory};
use crate::video::{interpolate_missing, VideoStacker};

pub const CHECKPOINT_FILE: &str = "ckpt_best.bin";
pub const REPORT_FILE: &str = "report.json";

fn csv_err(e: csv::Error) -> Error {
    Error::format(e.to_string())
}

/// Paths below a work directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn prepared(&self) -> PathBuf {
        self.root.join("prepared")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn view(&self, name: &str) -> PathBuf {
        self.features().join(format!("{name}.csv"))
    }

    pub fn model_dir(&self, kind: ModelKind) -> PathBuf {
        self.root.join("models").join(kind.as_str())
    }

    pub fn checkpoint(&self, kind: ModelKind) -> PathBuf {
        self.model_dir(kind).join(CHECKPOINT_FILE)
    }
}

/// Creates the work directory and records the resolved config and seed.
pub fn init_run_dir(cfg: &RunConfig) -> Result<RunLayout> {
    let layout = RunLayout::new(&cfg.paths.work_dir);
    ensure_dir(&layout.root)?;
    write_atomic(&layout.root.join("config.resolved.toml"), cfg.to_toml().as_bytes())?;
    write_atomic(&layout.root.join("seed.txt"), format!("{}\n", cfg.seed).as_bytes())?;
    Ok(layout)
}

/// Manifest rows plus the row-aligned video table.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCorpus {
    pub ids: Vec<String>,
    pub clip_paths: Vec<PathBuf>,
    /// Source label ids as stored in the manifest.
    pub labels: Vec<usize>,
    pub transcripts: Vec<String>,
    /// Missing cells are NaN.
    pub video: FeatureMatrix,
}

impl RawCorpus {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Reads `manifest.csv` (id, clip_path, label, transcript; any column
/// order) and the video table.
pub fn load_corpus(manifest: &Path, video: &Path) -> Result<RawCorpus> {
    let text = read_string(manifest)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(format!("{}: missing column {name:?}", manifest.display())))
    };
    let (ci, cp, cl, ct) = (col("id")?, col("clip_path")?, col("label")?, col("transcript")?);
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut corpus = RawCorpus {
        ids: Vec::new(),
        clip_paths: Vec::new(),
        labels: Vec::new(),
        transcripts: Vec::new(),
        video: FeatureMatrix::empty(0),
    };
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let label = field(cl)
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::format(format!("manifest row {}: label {:?} is not a class id", r + 1, field(cl))))?;
        corpus.ids.push(field(ci).to_string());
        corpus.clip_paths.push(base.join(field(cp)));
        corpus.labels.push(label);
        corpus.transcripts.push(field(ct).to_string());
    }
    if corpus.is_empty() {
        return Err(Error::format(format!("{} has no rows", manifest.display())));
    }
    let opts = TableOptions {
        label_column: None,
        allow_missing: true,
    };
    corpus.video = load_table(video, TableFormat::from_path(video)?, &opts)?.matrix;
    if corpus.video.rows() != corpus.len() {
        return Err(Error::shape(format!(
            "video table has {} rows but the manifest has {}",
            corpus.video.rows(),
            corpus.len()
        )));
    }
    Ok(corpus)
}

/// Remapped labels, split tags and the oversampled training plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub ids: Vec<String>,
    pub source_labels: Vec<usize>,
    pub labels: Vec<usize>,
    pub tags: Vec<SplitTag>,
    pub train_plan: Vec<usize>,
}

impl Prepared {
    pub fn rows_with(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.tags.len()).filter(|&i| self.tags[i] == tag).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "source_label", "label", "split"]).map_err(csv_err)?;
        for i in 0..self.ids.len() {
            w.write_record([
                self.ids[i].as_str(),
                &self.source_labels[i].to_string(),
                &self.labels[i].to_string(),
                self.tags[i].as_str(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format(e.to_string()))?;
        write_atomic(&dir.join("samples.csv"), &bytes)?;
        let mut plan = String::from("row\n");
        for r in &self.train_plan {
            let _ = writeln!(plan, "{r}");
        }
        write_atomic(&dir.join("train_plan.csv"), plan.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("samples.csv");
        let text = read_string(&path)?;
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut p = Prepared {
            ids: Vec::new(),
            source_labels: Vec::new(),
            labels: Vec::new(),
            tags: Vec::new(),
            train_plan: Vec::new(),
        };
        let bad = |r: usize| Error::format(format!("{} row {}: malformed", path.display(), r + 1));
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 4 {
                return Err(bad(r));
            }
            p.ids.push(rec[0].to_string());
            p.source_labels.push(rec[1].parse().map_err(|_| bad(r))?);
            p.labels.push(rec[2].parse().map_err(|_| bad(r))?);
            p.tags.push(SplitTag::parse(&rec[3])?);
        }
        let plan_text = read_string(&dir.join("train_plan.csv"))?;
        for line in plan_text.lines().skip(1) {
            let r: usize = line
                .trim()
                .parse()
                .map_err(|_| Error::format(format!("train_plan.csv: bad row {line:?}")))?;
            if r >= p.ids.len() {
                return Err(Error::format(format!("train_plan.csv: row {r} out of range")));
            }
            p.train_plan.push(r);
        }
        Ok(p)
    }
}

/// Remap, split and plan oversampling; writes `prepared/`.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let layout = init_run_dir(cfg)?;
    let corpus = load_corpus(&cfg.paths.manifest, &cfg.paths.video)?;
    let labels = remap_labels(&corpus.labels, &cfg.label_map)?;
    let tags = stratified_split_tags(&labels, &cfg.split, &mut SeededRng::substream(cfg.seed, "split"))?;
    let train_rows: Vec<usize> = (0..tags.len()).filter(|&i| tags[i] == SplitTag::Train).collect();
    let train_plan = if cfg.oversample.enabled {
        oversample_indices(
            &labels,
            &train_rows,
            &cfg.oversample.targets,
            &mut SeededRng::substream(cfg.seed, "oversample"),
        )?
    } else {
        train_rows.clone()
    };
    info!(
        "prepared {} rows: train {} (plan {}), val {}, test {}",
        labels.len(),
        train_rows.len(),
        train_plan.len(),
        tags.iter().filter(|&&t| t == SplitTag::Val).count(),
        tags.iter().filter(|&&t| t == SplitTag::Test).count()
    );
    let p = Prepared {
        ids: corpus.ids,
        source_labels: corpus.labels,
        labels,
        tags,
        train_plan,
    };
    p.save(&layout.prepared())?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Text,
    Audio,
    Video,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Video];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown modality {s:?}; expected text, audio or video")))
    }
}

fn check_prepared(corpus: &RawCorpus, p: &Prepared) -> Result<()> {
    if corpus.ids != p.ids {
        return Err(Error::format(
            "prepared/samples.csv does not match the manifest; rerun prepare".to_string(),
        ));
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::format(e.to_string()))?;
    write_atomic(path, s.as_bytes())
}

/// Overwrites the rows `rows` of `full` with the rows of `part`.
fn scatter_rows(full: &mut FeatureMatrix, rows: &[usize], part: &FeatureMatrix) {
    for (j, &r) in rows.iter().enumerate() {
        for c in 0..part.cols() {
            full.set(r, c, part.get(j, c));
        }
    }
}

/// Fits the requested modality transformers on the training rows and
/// writes enriched and plain views for every row.
pub fn featurize(cfg: &RunConfig, modalities: &[Modality]) -> Result<()> {
    let layout = init_run_dir(cfg)?;
    let corpus = load_corpus(&cfg.paths.manifest, &cfg.paths.video)?;
    let p = Prepared::load(&layout.prepared())?;
    check_prepared(&corpus, &p)?;
    let dir = layout.features();
    ensure_dir(&dir)?;
    let train_rows = p.rows_with(SplitTag::Train);
    let train_labels: Vec<usize> = train_rows.iter().map(|&i| p.labels[i]).collect();
    let k = cfg.n_classes();
    let save = |name: &str, m: &FeatureMatrix| save_table(&layout.view(name), TableFormat::Csv, m, None);
    for &m in modalities {
        info!("featurizing {}", m.as_str());
        match m {
            Modality::Text => {
                let norm = TextNormConfig::bundled();
                let docs: Vec<Vec<String>> = corpus.transcripts.iter().map(|t| normalize_text(t, &norm)).collect();
                let train_docs: Vec<Vec<String>> = train_rows.iter().map(|&i| docs[i].clone()).collect();
                let fitted = FittedText::fit(&train_docs, &train_labels, k, &cfg.text)?;
                write_atomic(&dir.join("text_model.json"), fitted.to_json().as_bytes())?;
                save("text_plain", &fitted.transform_raw(&docs))?;
                save("text", &fitted.transform(&docs)?)?;
            }
            Modality::Audio => {
                let clips: Vec<AudioClip> = corpus.clip_paths.iter().map(|p| read_wav(p)).collect::<Result<_>>()?;
                let raw = extract_audio_matrix(&clips, &cfg.audio)?;
                drop(clips);
                let stats = zscore_fit(&raw.select_rows(&train_rows))?;
                write_json(&dir.join("audio_scaler.json"), &stats)?;
                let plain = zscore_apply(&raw, &stats)?;
                save("audio_plain", &plain)?;
                let enriched = if cfg.leaf.enabled {
                    let mut leaf = LeafEmbedder::default();
                    leaf.fit_transform(
                        &plain.select_rows(&train_rows),
                        &train_labels,
                        k,
                        &cfg.leaf.gbdt,
                        &mut SeededRng::substream(cfg.seed, "audio_leaf"),
                    )?;
                    info!("audio leaf embedding adds {} columns", leaf.appended_width());
                    write_json(&dir.join("audio_leaf.json"), &leaf)?;
                    leaf.transform(&plain)?
                } else {
                    plain
                };
                save("audio", &enriched)?;
            }
            Modality::Video => {
                let filled = interpolate_missing(&corpus.video, cfg.video.gap_fill)?;
                let stats = zscore_fit(&filled.select_rows(&train_rows))?;
                write_json(&dir.join("video_scaler.json"), &stats)?;
                let plain = zscore_apply(&filled, &stats)?;
                save("video_plain", &plain)?;
                let enriched = if cfg.video.stacking_enabled {
                    let mut stacker = VideoStacker::default();
                    let train_part = stacker.fit_transform(
                        &plain.select_rows(&train_rows),
                        &train_labels,
                        k,
                        &cfg.video.gbdt,
                        cfg.video.stacking,
                        &mut SeededRng::substream(cfg.seed, "video_stack"),
                    )?;
                    write_json(&dir.join("video_stacker.json"), &stacker)?;
                    let mut all = stacker.transform(&plain)?;
                    scatter_rows(&mut all, &train_rows, &train_part);
                    all
                } else {
                    plain
                };
                save("video", &enriched)?;
            }
        }
    }
    Ok(())
}

fn load_view(layout: &RunLayout, name: &str, rows: usize) -> Result<FeatureMatrix> {
    let path = layout.view(name);
    if !path.exists() {
        return Err(Error::invalid(format!(
            "{} not found; run featurize first",
            path.display()
        )));
    }
    let m = load_table(&path, TableFormat::Csv, &TableOptions::default())?.matrix;
    if m.rows() != rows {
        return Err(Error::shape(format!(
            "{} has {} rows, expected {rows}",
            path.display(),
            m.rows()
        )));
    }
    Ok(m)
}

/// Named input views of a model kind, in branch order.
pub fn model_views(layout: &RunLayout, kind: ModelKind, rows: usize) -> Result<Vec<(String, FeatureMatrix)>> {
    let named = |names: &[(&str, &str)]| -> Result<Vec<(String, FeatureMatrix)>> {
        names
            .iter()
            .map(|&(branch, file)| Ok((branch.to_string(), load_view(layout, file, rows)?)))
            .collect()
    };
    match kind {
        ModelKind::Fused => named(&[("audio", "audio"), ("video", "video"), ("text", "text")]),
        ModelKind::Text => named(&[("text", "text")]),
        ModelKind::Audio => named(&[("audio", "audio")]),
        ModelKind::Video => named(&[("video", "video")]),
        ModelKind::LateSimple => named(&[("audio", "audio_plain"), ("video", "video_plain"), ("text", "text_plain")]),
        ModelKind::Early => {
            let parts = named(&[("a", "audio_plain"), ("v", "video_plain"), ("t", "text_plain")])?;
            let mut m = FeatureMatrix::empty(rows);
            for (_, p) in &parts {
                m = concat_columns(&m, p)?;
            }
            Ok(vec![("early".to_string(), m)])
        }
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FusionModel,
    pub history: TrainHistory,
}

/// Trains `kind` on the oversampled plan with validation-loss callbacks;
/// writes the best checkpoint, history.csv and curve plots.
pub fn train_model(cfg: &RunConfig, kind: ModelKind) -> Result<TrainOutcome> {
    let layout = init_run_dir(cfg)?;
    let p = Prepared::load(&layout.prepared())?;
    let views = model_views(&layout, kind, p.labels.len())?;
    let widths: Vec<(&str, usize)> = views.iter().map(|(n, m)| (n.as_str(), m.cols())).collect();
    let spec = cfg.model.model(&widths, cfg.n_classes());
    let model = FusionModel::init(&spec, &mut SeededRng::substream(cfg.seed, &format!("init/{kind}")))?;
    info!("training {kind}: {} parameters, inputs {widths:?}", model.n_parameters());
    let refs: Vec<&FeatureMatrix> = views.iter().map(|(_, m)| m).collect();
    let val_rows = p.rows_with(SplitTag::Val);
    let out_dir = layout.model_dir(kind);
    ensure_dir(&out_dir)?;
    let mut runner = FusionRunner::new(
        model,
        SplitViews {
            views: &refs,
            labels: &p.labels,
            rows: &p.train_plan,
        },
        SplitViews {
            views: &refs,
            labels: &p.labels,
            rows: &val_rows,
        },
        &cfg.train,
        SeededRng::substream(cfg.seed, &format!("train/{kind}")),
        Some(out_dir.join(CHECKPOINT_FILE)),
    )?;
    let history = train_loop(&mut runner, &cfg.train)?;
    info!(
        "{kind}: best epoch {} (val loss {:.4}) of {}",
        history.best_epoch,
        history.best_val_loss,
        history.records.len()
    );
    export_history(&history, None, &out_dir)?;
    Ok(TrainOutcome {
        model: runner.into_model(),
        history,
    })
}

fn check_widths(model: &FusionModel, views: &[(String, FeatureMatrix)]) -> Result<()> {
    let spec = &model.spec;
    let ok = spec.branches.len() == views.len()
        && spec
            .branches
            .iter()
            .zip(views)
            .all(|(b, (n, m))| &b.name == n && b.input_width == m.cols());
    if !ok {
        let want: Vec<(&str, usize)> = spec.branches.iter().map(|b| (b.name.as_str(), b.input_width)).collect();
        let got: Vec<(&str, usize)> = views.iter().map(|(n, m)| (n.as_str(), m.cols())).collect();
        return Err(Error::shape(format!("checkpoint expects inputs {want:?}, features provide {got:?}")));
    }
    Ok(())
}

/// Evaluates a checkpoint of `kind` on the test split; writes report.json
/// and curve files next to the model's other outputs.
pub fn evaluate_model(cfg: &RunConfig, kind: ModelKind, ckpt: Option<&Path>) -> Result<EvalReport> {
    let layout = init_run_dir(cfg)?;
    let p = Prepared::load(&layout.prepared())?;
    let default_ckpt = layout.checkpoint(kind);
    let model = checkpoint::load(ckpt.unwrap_or(&default_ckpt))?;
    let views = model_views(&layout, kind, p.labels.len())?;
    check_widths(&model, &views)?;
    let refs: Vec<&FeatureMatrix> = views.iter().map(|(_, m)| m).collect();
    let test_rows = p.rows_with(SplitTag::Test);
    let report = train::evaluate(
        &model,
        &SplitViews {
            views: &refs,
            labels: &p.labels,
            rows: &test_rows,
        },
    )?;
    let out_dir = layout.model_dir(kind);
    write_atomic(&out_dir.join(REPORT_FILE), report.to_json().as_bytes())?;
    export_report(&report, &out_dir)?;
    info!("{kind}: test accuracy {:.4}, weighted F1 {:.4}", report.accuracy, report.scores.weighted_f1);
    Ok(report)
}

/// Markdown table of the reports found in `runs` (each a directory holding
/// report.json), best accuracy first.
pub fn compare(runs: &[PathBuf]) -> Result<String> {
    let mut rows = Vec::new();
    for dir in runs {
        let report = EvalReport::from_json(&read_string(&dir.join(REPORT_FILE))?)?;
        let name = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        rows.push((name, report));
    }
    rows.sort_by(|a, b| b.1.accuracy.total_cmp(&a.1.accuracy).then_with(|| a.0.cmp(&b.0)));
    let mut s = String::from("| Model | Accuracy | Weighted F1 | Macro F1 | Macro AUC | Log loss |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|\n");
    for (name, r) in &rows {
        let auc = r.macro_auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(
            s,
            "| {name} | {:.4} | {:.4} | {:.4} | {auc} | {:.4} |",
            r.accuracy, r.scores.weighted_f1, r.scores.macro_f1, r.log_loss
        );
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub reports: Vec<(ModelKind, EvalReport)>,
    pub comparison: String,
}

/// prepare → featurize → train/evaluate the fused model and every
/// configured baseline → comparison.md.
pub fn run_all(cfg: &RunConfig) -> Result<RunSummary> {
    prepare(cfg)?;
    featurize(cfg, &Modality::ALL)?;
    let layout = RunLayout::new(&cfg.paths.work_dir);
    let mut kinds = vec![ModelKind::Fused];
    kinds.extend(cfg.baselines.iter().copied().filter(|&k| k != ModelKind::Fused));
    let mut reports = Vec::new();
    for &kind in &kinds {
        train_model(cfg, kind)?;
        reports.push((kind, evaluate_model(cfg, kind, None)?));
    }
    let dirs: Vec<PathBuf> = kinds.iter().map(|&k| layout.model_dir(k)).collect();
    let comparison = compare(&dirs)?;
    write_atomic(&layout.root.join("comparison.md"), comparison.as_bytes())?;
    Ok(RunSummary { reports, comparison })
}
