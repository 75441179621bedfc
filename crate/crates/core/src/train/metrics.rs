//! Classification metrics over predicted probability matrices.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::mean_cross_entropy;

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predictions(probs: &[f64], k: usize) -> Vec<usize> {
    probs.chunks_exact(k).map(argmax).collect()
}

/// `cm[i][j]` counts samples of true class `i` predicted as `j`.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = vec![vec![0; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if let Some(&bad) = [t, p].iter().find(|&&v| v >= k) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                detail: format!("confusion matrix over {k} classes"),
            });
        }
        cm[t][p] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &[Vec<usize>]) -> f64 {
    let total: usize = cm.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let trace: usize = (0..cm.len()).map(|i| cm[i][i]).sum();
    trace as f64 / total as f64
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

/// Per-class precision, recall and F1 with macro and support-weighted
/// means. Zero denominators yield 0.
pub fn prf_scores(cm: &[Vec<usize>]) -> PrfScores {
    let k = cm.len();
    let support: Vec<usize> = cm.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<usize> = (0..k).map(|j| cm.iter().map(|r| r[j]).sum()).collect();
    let precision: Vec<f64> = (0..k).map(|c| ratio(cm[c][c], predicted[c])).collect();
    let recall: Vec<f64> = (0..k).map(|c| ratio(cm[c][c], support[c])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(p, r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .collect();
    let total: usize = support.iter().sum();
    let mean = |v: &[f64]| if k == 0 { 0.0 } else { v.iter().sum::<f64>() / k as f64 };
    let weighted = |v: &[f64]| {
        if total == 0 {
            0.0
        } else {
            v.iter().zip(&support).map(|(x, &s)| x * s as f64).sum::<f64>() / total as f64
        }
    };
    PrfScores {
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        weighted_precision: weighted(&precision),
        weighted_recall: weighted(&recall),
        weighted_f1: weighted(&f1),
        precision,
        recall,
        f1,
        support,
    }
}

pub fn log_loss(probs: &[f64], y_true: &[usize], k: usize) -> Result<f64> {
    mean_cross_entropy(probs, y_true, k)
}

/// Scores sorted descending with their positive flags.
fn ranked(scores: &[f64], positive: &[bool]) -> Vec<(f64, bool)> {
    let mut v: Vec<(f64, bool)> = scores.iter().copied().zip(positive.iter().copied()).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

/// Groups of equal score, descending: `(score, positives, negatives)`.
fn score_groups(scores: &[f64], positive: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (s, p) in ranked(scores, positive) {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if p {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((s, usize::from(p), usize::from(!p))),
        }
    }
    groups
}

/// Mann-Whitney AUC: `P(score_pos > score_neg)` with ties counted one half.
/// `None` when either class is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let groups = score_groups(scores, positive);
    let n_pos: usize = groups.iter().map(|g| g.1).sum();
    let n_neg: usize = groups.iter().map(|g| g.2).sum();
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // twice the win count keeps everything integral
    let mut neg_below = n_neg;
    let mut twice_wins: u128 = 0;
    for &(_, p, n) in &groups {
        neg_below -= n;
        twice_wins += 2 * (p as u128) * (neg_below as u128) + (p as u128) * (n as u128);
    }
    Some(twice_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// `(fpr, tpr)` points from the strictest threshold down, starting at the
/// origin.
pub fn roc_points(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let groups = score_groups(scores, positive);
    let n_pos: usize = groups.iter().map(|g| g.1).sum();
    let n_neg: usize = groups.iter().map(|g| g.2).sum();
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0, 0);
    for (_, p, n) in groups {
        tp += p;
        fp += n;
        pts.push((ratio(fp, n_neg), ratio(tp, n_pos)));
    }
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    /// One-vs-rest AUC per class; `None` when undefined.
    pub auc: Vec<Option<f64>>,
    pub macro_auc: f64,
    pub curves: Vec<Vec<(f64, f64)>>,
}

fn class_scores(probs: &[f64], y: &[usize], k: usize, c: usize) -> (Vec<f64>, Vec<bool>) {
    (
        probs.chunks_exact(k).map(|r| r[c]).collect(),
        y.iter().map(|&t| t == c).collect(),
    )
}

pub fn roc_auc(probs: &[f64], y_true: &[usize], k: usize) -> Result<RocSummary> {
    if y_true.is_empty() || probs.len() != y_true.len() * k {
        return Err(Error::shape("roc_auc needs one probability row per label"));
    }
    let mut auc = Vec::with_capacity(k);
    let mut curves = Vec::with_capacity(k);
    for c in 0..k {
        let (s, pos) = class_scores(probs, y_true, k, c);
        let a = binary_auc(&s, &pos);
        if a.is_none() {
            warn!("AUC undefined for class {c}: needs positives and negatives; excluded from macro AUC");
        }
        auc.push(a);
        curves.push(roc_points(&s, &pos));
    }
    let defined: Vec<f64> = auc.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::invalid("AUC undefined: every sample belongs to one class"));
    }
    Ok(RocSummary {
        macro_auc: defined.iter().sum::<f64>() / defined.len() as f64,
        auc,
        curves,
    })
}

/// `(recall, precision)` at every distinct score threshold, descending.
pub fn pr_curve(probs: &[f64], y_true: &[usize], k: usize, class: usize) -> Result<Vec<(f64, f64)>> {
    let (s, pos) = class_scores(probs, y_true, k, class);
    let groups = score_groups(&s, &pos);
    let n_pos: usize = groups.iter().map(|g| g.1).sum();
    if n_pos == 0 {
        return Err(Error::invalid(format!("PR curve undefined: class {class} has no positives")));
    }
    let (mut tp, mut fp) = (0, 0);
    Ok(groups
        .into_iter()
        .map(|(_, p, n)| {
            tp += p;
            fp += n;
            (ratio(tp, n_pos), ratio(tp, tp + fp))
        })
        .collect())
}

pub const REPORT_FORMAT: &str = "fusent-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub n_samples: usize,
    pub n_classes: usize,
    pub accuracy: f64,
    pub log_loss: f64,
    pub scores: PrfScores,
    pub confusion: Vec<Vec<usize>>,
    pub auc: Vec<Option<f64>>,
    pub macro_auc: Option<f64>,
    pub roc: Vec<Vec<(f64, f64)>>,
    /// Empty for classes without positives.
    pub pr: Vec<Vec<(f64, f64)>>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s).map_err(|e| Error::format(format!("report json: {e}")))?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(Error::format(format!(
                "unsupported report {:?} version {}",
                r.format, r.version
            )));
        }
        Ok(r)
    }
}

/// Every metric from one probability matrix.
pub fn evaluate_probs(probs: &[f64], y_true: &[usize], k: usize) -> Result<EvalReport> {
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pred = predictions(probs, k);
    let confusion = confusion_matrix(y_true, &pred, k)?;
    let log_loss = log_loss(probs, y_true, k)?;
    let (auc, macro_auc, roc) = match roc_auc(probs, y_true, k) {
        Ok(r) => (r.auc, Some(r.macro_auc), r.curves),
        Err(_) => {
            warn!("AUC undefined for this evaluation set");
            (vec![None; k], None, vec![Vec::new(); k])
        }
    };
    let pr = (0..k)
        .map(|c| pr_curve(probs, y_true, k, c).unwrap_or_default())
        .collect();
    Ok(EvalReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        n_samples: y_true.len(),
        n_classes: k,
        accuracy: accuracy(&confusion),
        log_loss,
        scores: prf_scores(&confusion),
        confusion,
        auc,
        macro_auc,
        roc,
        pr,
    })
}
