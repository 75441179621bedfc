//! Label remapping, stratified train/val/test splitting and targeted
//! oversampling of the training split.
//!
//! Oversampling works on row indices so every modality view and the label
//! are duplicated together; [`oversample_to_targets`] applies the index plan
//! to a [`LabeledDataset`].

use serde::{Deserialize, Serialize};

use crate::data::{class_counts, LabeledDataset, SplitTag};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Total map from source label ids to a contiguous target range `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMap(Vec<usize>);

impl Default for LabelMap {
    fn default() -> Self {
        Self(vec![0, 1, 1, 2, 2, 3, 4, 5])
    }
}

impl LabelMap {
    pub fn new(targets: Vec<usize>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::invalid("label map must cover at least one source label"));
        }
        let k = targets.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &t in &targets {
            seen[t] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "label map targets must form 0..{k}; {missing} is never produced"
            )));
        }
        Ok(Self(targets))
    }

    pub fn n_sources(&self) -> usize {
        self.0.len()
    }

    pub fn n_targets(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    pub fn targets(&self) -> &[usize] {
        &self.0
    }

    pub fn map(&self, source: usize) -> Result<usize> {
        self.0.get(source).copied().ok_or_else(|| Error::LabelOutOfRange {
            label: source,
            detail: format!("label map covers source ids 0..{}", self.0.len()),
        })
    }

    /// Source ids mapping to `target`, ascending.
    pub fn preimage(&self, target: usize) -> Vec<usize> {
        (0..self.0.len()).filter(|&s| self.0[s] == target).collect()
    }
}

pub fn remap_labels(labels: &[usize], map: &LabelMap) -> Result<Vec<usize>> {
    labels.iter().map(|&y| map.map(y)).collect()
}

/// Train/val/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    /// 80:20 train/test with a tenth of the training portion held out for
    /// validation.
    pub fn train_test_with_val() -> Self {
        Self {
            train: 0.72,
            val: 0.08,
            test: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("split fractions must lie in [0, 1]"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split fractions must sum to 1"));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for a class of `n` rows. Val and test take
    /// `round(fraction × n)`, at least one row each when their fraction is
    /// positive; the remainder goes to train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let part = |f: f64| {
            if f > 0.0 {
                ((f * n as f64).round() as usize).max(1)
            } else {
                0
            }
        };
        let (v, t) = (part(self.val), part(self.test));
        (n - v - t, v, t)
    }
}

pub const MIN_CLASS_SIZE: usize = 3;

/// Per-class shuffled partition of `labels` into split tags.
pub fn stratified_split_tags(
    labels: &[usize],
    fractions: &SplitFractions,
    rng: &mut SeededRng,
) -> Result<Vec<SplitTag>> {
    fractions.validate()?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut tags = vec![SplitTag::Train; labels.len()];
    for c in 0..k {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < MIN_CLASS_SIZE {
            return Err(Error::invalid(format!(
                "class {c} has {} samples; stratified splitting needs at least {MIN_CLASS_SIZE}",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let (tr, va, _) = fractions.counts(idx.len());
        for (pos, &i) in idx.iter().enumerate() {
            tags[i] = if pos < tr {
                SplitTag::Train
            } else if pos < tr + va {
                SplitTag::Val
            } else {
                SplitTag::Test
            };
        }
    }
    Ok(tags)
}

pub fn stratified_split(
    ds: LabeledDataset,
    fractions: &SplitFractions,
    rng: &mut SeededRng,
) -> Result<LabeledDataset> {
    let tags = stratified_split_tags(&ds.labels, fractions, rng)?;
    ds.with_tags(tags)
}

/// Desired per-class training counts, indexed by class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetCounts(Vec<usize>);

impl Default for TargetCounts {
    fn default() -> Self {
        Self(vec![2933, 2933, 5000, 2933, 2933, 4000])
    }
}

impl TargetCounts {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid("target counts must be positive"));
        }
        Ok(Self(counts))
    }

    pub fn get(&self, class: usize) -> Option<usize> {
        self.0.get(class).copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Every count multiplied by `factor`, rounded, at least 1.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(
            self.0
                .iter()
                .map(|&c| ((c as f64 * factor).round() as usize).max(1))
                .collect(),
        )
    }
}

/// Row plan for the oversampled training set: the original `rows` plus,
/// for each class short of its target, indices drawn uniformly with
/// replacement from that class. The plan is shuffled.
pub fn oversample_indices(
    labels: &[usize],
    rows: &[usize],
    targets: &TargetCounts,
    rng: &mut SeededRng,
) -> Result<Vec<usize>> {
    let k = rows.iter().map(|&i| labels[i] + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &i in rows {
        by_class[labels[i]].push(i);
    }
    let mut plan = rows.to_vec();
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let target = targets.get(c).ok_or_else(|| Error::LabelOutOfRange {
            label: c,
            detail: format!("target counts cover classes 0..{}", targets.0.len()),
        })?;
        for _ in members.len()..target {
            plan.push(members[rng.below(members.len())]);
        }
    }
    rng.shuffle(&mut plan);
    Ok(plan)
}

/// Oversamples a training set (every row is treated as training data).
pub fn oversample_to_targets(
    train: &LabeledDataset,
    targets: &TargetCounts,
    rng: &mut SeededRng,
) -> Result<LabeledDataset> {
    let rows: Vec<usize> = (0..train.len()).collect();
    let plan = oversample_indices(&train.labels, &rows, targets, rng)?;
    Ok(train.select_rows(&plan))
}

/// Per-class counts after oversampling: `max(n_c, target_c)` for present
/// classes.
pub fn expected_counts(labels: &[usize], targets: &TargetCounts) -> Vec<usize> {
    let k = targets.0.len().max(labels.iter().map(|y| y + 1).max().unwrap_or(0));
    class_counts(labels, k)
        .into_iter()
        .enumerate()
        .map(|(c, n)| if n == 0 { 0 } else { n.max(targets.get(c).unwrap_or(0)) })
        .collect()
}
