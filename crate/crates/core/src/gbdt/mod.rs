//! Gradient-boosted regression trees with a multiclass softmax objective.
//!
//! Each boosting round computes softmax probabilities from the current class
//! logits, then grows one tree per class on the second-order statistics
//! `g = p - 1{y = c}` and `h = p (1 - p)`. Splits are found by exact greedy
//! enumeration over sorted unique feature values, maximising
//!
//! ```text
//! gain = ½ [G_L² / (H_L + λ) + G_R² / (H_R + λ) − G² / (H + λ)]
//! ```
//!
//! and leaves take the Newton value `−G / (H + λ)`. A tree's contribution to
//! its class logit is scaled by the learning rate. Rows with `x[f] < threshold`
//! go left. Ties between equal-gain candidates resolve to the lowest feature
//! index, then the lowest threshold, which makes fitting fully deterministic.
//!
//! Models serialise to a versioned JSON document:
//!
//! ```text
//! { "format": "fusent-gbdt", "version": 1, "n_classes": K, "n_features": F,
//!   "learning_rate": η, "base_score": [K reals], "config": {...},
//!   "trees": [ [ {"n_leaves": L, "root": NODE}, ... K per round ], ... ] }
//! NODE = {"split": {"feature": f, "threshold": t, "left": NODE, "right": NODE}}
//!      | {"leaf": {"value": v, "leaf_id": i}}
//! ```

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const GBDT_FORMAT: &str = "fusent-gbdt";
pub const GBDT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub min_samples_leaf: usize,
    /// Fraction of rows sampled (without replacement) per round.
    pub subsample: f64,
    /// Fraction of features sampled per tree.
    pub colsample: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 50,
            max_depth: 4,
            learning_rate: 0.3,
            l2_reg: 1.0,
            min_samples_leaf: 5,
            subsample: 1.0,
            colsample: 1.0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.l2_reg >= 0.0) {
            return Err(Error::invalid("gbdt learning_rate must be > 0 and l2_reg >= 0"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0)
            || !(self.colsample > 0.0 && self.colsample <= 1.0)
        {
            return Err(Error::invalid("gbdt subsample/colsample must lie in (0, 1]"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("gbdt min_samples_leaf must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        leaf_id: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub n_leaves: usize,
    pub root: TreeNode,
}

impl Tree {
    fn route(&self, x: &[f64]) -> (usize, f64) {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, leaf_id } => return (*leaf_id, *value),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        self.route(x).0
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.route(x).1
    }

    /// Leaf values indexed by leaf id.
    pub fn leaf_values(&self) -> Vec<f64> {
        fn walk(n: &TreeNode, out: &mut [f64]) {
            match n {
                TreeNode::Leaf { value, leaf_id } => out[*leaf_id] = *value,
                TreeNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = vec![0.0; self.n_leaves];
        walk(&self.root, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        fn d(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format: String,
    pub version: u32,
    pub n_classes: usize,
    pub n_features: usize,
    pub learning_rate: f64,
    pub base_score: Vec<f64>,
    pub config: GbdtConfig,
    /// `trees[round][class]`.
    pub trees: Vec<Vec<Tree>>,
}

/// Per-round training diagnostics; `loss[0]` is the loss before any tree.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub loss: Vec<f64>,
}

/// Leaf reached by every row in every tree, in (round, class) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafIndices {
    pub rows: usize,
    pub n_trees: usize,
    pub ids: Vec<usize>,
}

impl LeafIndices {
    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[r * self.n_trees..(r + 1) * self.n_trees]
    }
}

pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
}

pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub n_left: usize,
}

fn threshold_between(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) * 0.5;
    if mid > lo && mid < hi {
        mid
    } else {
        hi
    }
}

/// Best split for one node given per-feature member lists sorted by value.
fn best_split_sorted(
    x: &FeatureMatrix,
    grad: &[f64],
    hess: &[f64],
    sorted: &[(usize, Vec<usize>)],
    cfg: &GbdtConfig,
) -> Option<SplitCandidate> {
    let n = sorted.first().map_or(0, |(_, v)| v.len());
    if n < 2 * cfg.min_samples_leaf {
        return None;
    }
    let members = &sorted[0].1;
    let g_tot: f64 = members.iter().map(|&i| grad[i]).sum();
    let h_tot: f64 = members.iter().map(|&i| hess[i]).sum();
    let mut best: Option<SplitCandidate> = None;
    for (f, order) in sorted {
        let mut gl = 0.0;
        let mut hl = 0.0;
        for k in 0..n - 1 {
            let i = order[k];
            gl += grad[i];
            hl += hess[i];
            let n_left = k + 1;
            let (v, next) = (x.get(i, *f), x.get(order[k + 1], *f));
            if v == next || n_left < cfg.min_samples_leaf || n - n_left < cfg.min_samples_leaf {
                continue;
            }
            let gain = split_gain(gl, hl, g_tot - gl, h_tot - hl, cfg.l2_reg);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature: *f,
                    threshold: threshold_between(v, next),
                    gain,
                    n_left,
                });
            }
        }
    }
    best
}

fn presort(x: &FeatureMatrix, rows: &[usize], features: &[usize]) -> Vec<(usize, Vec<usize>)> {
    features
        .iter()
        .map(|&f| {
            let mut idx = rows.to_vec();
            idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
            (f, idx)
        })
        .collect()
}

/// Exhaustive best split over `rows` (all features), the search used when
/// growing each node. Exposed for verification against brute force.
pub fn find_best_split(
    x: &FeatureMatrix,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    cfg: &GbdtConfig,
) -> Option<SplitCandidate> {
    let features: Vec<usize> = (0..x.cols()).collect();
    best_split_sorted(x, grad, hess, &presort(x, rows, &features), cfg)
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbdtConfig,
    next_leaf: usize,
    in_left: Vec<bool>,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, members: &[usize]) -> TreeNode {
        let g: f64 = members.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = members.iter().map(|&i| self.hess[i]).sum();
        let id = self.next_leaf;
        self.next_leaf += 1;
        TreeNode::Leaf {
            value: leaf_weight(g, h, self.cfg.l2_reg),
            leaf_id: id,
        }
    }

    fn build(&mut self, sorted: Vec<(usize, Vec<usize>)>, members: &[usize], depth: usize) -> TreeNode {
        if depth >= self.cfg.max_depth || sorted.is_empty() {
            return self.leaf(members);
        }
        let Some(split) = best_split_sorted(self.x, self.grad, self.hess, &sorted, self.cfg) else {
            return self.leaf(members);
        };
        for &i in members {
            self.in_left[i] = self.x.get(i, split.feature) < split.threshold;
        }
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for (f, order) in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| self.in_left[i]);
            left_sorted.push((f, l));
            right_sorted.push((f, r));
        }
        let (lm, rm): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| self.in_left[i]);
        let left = self.build(left_sorted, &lm, depth + 1);
        let right = self.build(right_sorted, &rm, depth + 1);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Numerically stable softmax of one logit row, written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

fn mean_log_loss(probs: &[f64], labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[i * k + y].max(1e-12).ln())
        .sum::<f64>()
        / n as f64
}

fn check_inputs(x: &FeatureMatrix, labels: &[usize], n_classes: usize) -> Result<()> {
    if n_classes < 2 {
        return Err(Error::invalid(format!("gbdt needs at least 2 classes, got {n_classes}")));
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != x.rows() {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), x.rows())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label: y,
            detail: format!("gbdt fitted with {n_classes} classes"),
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("gbdt features must be finite".into()));
    }
    Ok(())
}

pub fn gbdt_fit(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    cfg: &GbdtConfig,
    rng: &mut SeededRng,
) -> Result<GbdtModel> {
    gbdt_fit_traced(x, labels, n_classes, cfg, rng).map(|(m, _)| m)
}

pub fn gbdt_fit_traced(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    cfg: &GbdtConfig,
    rng: &mut SeededRng,
) -> Result<(GbdtModel, FitTrace)> {
    cfg.validate()?;
    check_inputs(x, labels, n_classes)?;
    let (n, k) = (x.rows(), n_classes);
    let base_score = vec![0.0; k];
    let mut logits: Vec<f64> = (0..n).flat_map(|_| base_score.iter().copied()).collect();
    let mut probs = vec![0.0; n * k];
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    let mut loss = Vec::with_capacity(cfg.n_rounds + 1);
    let all_rows: Vec<usize> = (0..n).collect();
    let all_features: Vec<usize> = (0..x.cols()).collect();
    let full_sort = presort(x, &all_rows, &all_features);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for round in 0..=cfg.n_rounds {
        for i in 0..n {
            softmax_into(&logits[i * k..(i + 1) * k], &mut probs[i * k..(i + 1) * k]);
        }
        loss.push(mean_log_loss(&probs, labels, k));
        if round == cfg.n_rounds {
            break;
        }
        let rows: Vec<usize> = if cfg.subsample < 1.0 {
            let mut idx = all_rows.clone();
            rng.shuffle(&mut idx);
            idx.truncate(((n as f64 * cfg.subsample).ceil() as usize).max(1));
            idx.sort_unstable();
            idx
        } else {
            all_rows.clone()
        };
        let mut in_rows = vec![cfg.subsample >= 1.0; n];
        for &i in &rows {
            in_rows[i] = true;
        }
        let mut round_trees = Vec::with_capacity(k);
        for c in 0..k {
            for i in 0..n {
                let p = probs[i * k + c];
                grad[i] = p - if labels[i] == c { 1.0 } else { 0.0 };
                hess[i] = p * (1.0 - p);
            }
            let sorted: Vec<(usize, Vec<usize>)> = if cfg.colsample < 1.0 {
                let mut fs = all_features.clone();
                rng.shuffle(&mut fs);
                fs.truncate(((fs.len() as f64 * cfg.colsample).ceil() as usize).max(1));
                fs.sort_unstable();
                fs.iter()
                    .map(|&f| (f, full_sort[f].1.iter().copied().filter(|&i| in_rows[i]).collect()))
                    .collect()
            } else {
                full_sort
                    .iter()
                    .map(|(f, o)| (*f, o.iter().copied().filter(|&i| in_rows[i]).collect()))
                    .collect()
            };
            let mut b = TreeBuilder {
                x,
                grad: &grad,
                hess: &hess,
                cfg,
                next_leaf: 0,
                in_left: vec![false; n],
            };
            let root = b.build(sorted, &rows, 0);
            round_trees.push(Tree {
                n_leaves: b.next_leaf,
                root,
            });
        }
        for i in 0..n {
            let row = x.row(i);
            for (c, t) in round_trees.iter().enumerate() {
                logits[i * k + c] += cfg.learning_rate * t.predict(row);
            }
        }
        trees.push(round_trees);
    }
    let model = GbdtModel {
        format: GBDT_FORMAT.to_string(),
        version: GBDT_VERSION,
        n_classes: k,
        n_features: x.cols(),
        learning_rate: cfg.learning_rate,
        base_score,
        config: *cfg,
        trees,
    };
    Ok((model, FitTrace { loss }))
}

impl GbdtModel {
    /// Model that has seen no data: uniform logits.
    pub fn untrained(n_classes: usize, n_features: usize, cfg: &GbdtConfig) -> Self {
        Self {
            format: GBDT_FORMAT.to_string(),
            version: GBDT_VERSION,
            n_classes,
            n_features,
            learning_rate: cfg.learning_rate,
            base_score: vec![0.0; n_classes],
            config: *cfg,
            trees: Vec::new(),
        }
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len() * self.n_classes
    }

    /// Trees in (round, class) order.
    pub fn iter_trees(&self) -> impl Iterator<Item = (usize, usize, &Tree)> {
        self.trees
            .iter()
            .enumerate()
            .flat_map(|(r, ts)| ts.iter().enumerate().map(move |(c, t)| (r, c, t)))
    }

    /// Leaf counts per tree in (round, class) order.
    pub fn leaf_counts(&self) -> Vec<usize> {
        self.iter_trees().map(|(_, _, t)| t.n_leaves).collect()
    }

    fn check_width(&self, x: &FeatureMatrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::shape(format!(
                "gbdt fitted on {} features, got {}",
                self.n_features,
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn predict_logits(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let k = self.n_classes;
        let mut out = Vec::with_capacity(x.rows() * k);
        for row in x.iter_rows() {
            let mut z = self.base_score.clone();
            for ts in &self.trees {
                for (c, t) in ts.iter().enumerate() {
                    z[c] += self.learning_rate * t.predict(row);
                }
            }
            out.extend(z);
        }
        Ok(out)
    }

    /// Row-major `rows × K` softmax probabilities.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let logits = self.predict_logits(x)?;
        let k = self.n_classes;
        let mut probs = vec![0.0; logits.len()];
        for (z, p) in logits.chunks_exact(k).zip(probs.chunks_exact_mut(k)) {
            softmax_into(z, p);
        }
        Ok(probs)
    }

    pub fn leaf_indices(&self, x: &FeatureMatrix) -> Result<LeafIndices> {
        self.check_width(x)?;
        let n_trees = self.n_trees();
        let mut ids = Vec::with_capacity(x.rows() * n_trees);
        for row in x.iter_rows() {
            ids.extend(self.iter_trees().map(|(_, _, t)| t.leaf_of(row)));
        }
        Ok(LeafIndices {
            rows: x.rows(),
            n_trees,
            ids,
        })
    }

    /// One-hot leaf membership: one block of `n_leaves` columns per tree in
    /// (round, class) order, so every row carries exactly one 1 per tree.
    pub fn leaf_one_hot(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let leaves = self.leaf_indices(x)?;
        let counts = self.leaf_counts();
        let width: usize = counts.iter().sum();
        let mut names = Vec::with_capacity(width);
        for (r, c, t) in self.iter_trees() {
            names.extend((0..t.n_leaves).map(|l| format!("leaf_r{r}_c{c}_{l}")));
        }
        let mut values = vec![0.0; x.rows() * width];
        for r in 0..x.rows() {
            let mut offset = 0;
            for (t, &id) in leaves.row(r).iter().enumerate() {
                values[r * width + offset + id] = 1.0;
                offset += counts[t];
            }
        }
        FeatureMatrix::new(x.rows(), width, values, names)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("gbdt model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: GbdtModel = serde_json::from_str(s).map_err(|e| Error::format(format!("gbdt model: {e}")))?;
        if m.format != GBDT_FORMAT || m.version != GBDT_VERSION {
            return Err(Error::format(format!("unsupported gbdt model {} v{}", m.format, m.version)));
        }
        if m.base_score.len() != m.n_classes || m.trees.iter().any(|r| r.len() != m.n_classes) {
            return Err(Error::format("gbdt model: class count inconsistent with trees"));
        }
        Ok(m)
    }
}

pub fn gbdt_predict_proba(m: &GbdtModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    m.predict_proba(x)
}

pub fn gbdt_leaf_indices(m: &GbdtModel, x: &FeatureMatrix) -> Result<LeafIndices> {
    m.leaf_indices(x)
}

#[cfg(test)]
mod tests;
