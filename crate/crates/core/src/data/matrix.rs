use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major table of `rows × cols` reals with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    col_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, col_names: Vec<String>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if col_names.len() != cols {
            return Err(Error::shape(format!(
                "{} column names for {cols} columns",
                col_names.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            col_names,
        })
    }

    /// Matrix with generated column names `<prefix>_<i>`.
    pub fn with_prefix(rows: usize, cols: usize, values: Vec<f64>, prefix: &str) -> Result<Self> {
        let names = (0..cols).map(|i| format!("{prefix}_{i}")).collect();
        Self::new(rows, cols, values, names)
    }

    pub fn zeros(rows: usize, cols: usize, prefix: &str) -> Self {
        Self::with_prefix(rows, cols, vec![0.0; rows * cols], prefix).expect("consistent shape")
    }

    /// `rows × 0` matrix, the identity for [`concat_columns`].
    pub fn empty(rows: usize) -> Self {
        Self::zeros(rows, 0, "")
    }

    pub fn from_rows(rows: &[Vec<f64>], col_names: Vec<String>) -> Result<Self> {
        let cols = col_names.len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(format!("row {i} has {} values, expected {cols}", r.len())));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values, col_names)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on 0; a 0-column matrix still has `rows` empty rows
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// New matrix made of the given rows, in order; indices may repeat.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            values,
            col_names: self.col_names.clone(),
        }
    }

    /// New matrix made of the given columns, in order.
    pub fn select_cols(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&c| c >= self.cols) {
            return Err(Error::shape(format!("column {bad} out of range for width {}", self.cols)));
        }
        let mut values = Vec::with_capacity(self.rows * indices.len());
        for r in 0..self.rows {
            let row = self.row(r);
            values.extend(indices.iter().map(|&c| row[c]));
        }
        let names = indices.iter().map(|&c| self.col_names[c].clone()).collect();
        Self::new(self.rows, indices.len(), values, names)
    }
}

/// Alignment-preserving triple of modality views plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub text: FeatureMatrix,
    pub audio: FeatureMatrix,
    pub video: FeatureMatrix,
    pub labels: Vec<usize>,
    pub split_tag: Option<Vec<SplitTag>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::format(format!("unknown split tag {other:?}"))),
        }
    }
}

impl LabeledDataset {
    pub fn new(
        text: FeatureMatrix,
        audio: FeatureMatrix,
        video: FeatureMatrix,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        for (name, m) in [("text", &text), ("audio", &audio), ("video", &video)] {
            if m.rows() != n {
                return Err(Error::shape(format!(
                    "{name} view has {} rows but there are {n} labels",
                    m.rows()
                )));
            }
        }
        Ok(Self {
            text,
            audio,
            video,
            labels,
            split_tag: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn with_tags(mut self, tags: Vec<SplitTag>) -> Result<Self> {
        if tags.len() != self.len() {
            return Err(Error::shape(format!("{} split tags for {} rows", tags.len(), self.len())));
        }
        self.split_tag = Some(tags);
        Ok(self)
    }

    /// Joint row selection: every view, the label and the tag move together.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            text: self.text.select_rows(indices),
            audio: self.audio.select_rows(indices),
            video: self.video.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split_tag: self
                .split_tag
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
        }
    }

    /// Row indices carrying the given tag, in row order.
    pub fn indices_with_tag(&self, tag: SplitTag) -> Vec<usize> {
        match &self.split_tag {
            Some(tags) => (0..self.len()).filter(|&i| tags[i] == tag).collect(),
            None => Vec::new(),
        }
    }

    pub fn subset(&self, tag: SplitTag) -> Self {
        self.select_rows(&self.indices_with_tag(tag))
    }

    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        class_counts(&self.labels, n_classes)
    }
}

pub fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &y in labels {
        if y < n_classes {
            counts[y] += 1;
        }
    }
    counts
}

/// Horizontal concatenation `[a | b]`.
pub fn concat_columns(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix> {
    if a.rows != b.rows {
        return Err(Error::shape(format!(
            "cannot concatenate {} rows with {} rows",
            a.rows, b.rows
        )));
    }
    let cols = a.cols + b.cols;
    let mut values = Vec::with_capacity(a.rows * cols);
    for r in 0..a.rows {
        values.extend_from_slice(a.row(r));
        values.extend_from_slice(b.row(r));
    }
    let names = a.col_names.iter().chain(&b.col_names).cloned().collect();
    FeatureMatrix::new(a.rows, cols, values, names)
}

/// Append zero columns named `pad_<i>` up to `target` width.
pub fn pad_columns(m: &FeatureMatrix, target: usize) -> Result<FeatureMatrix> {
    if m.cols > target {
        return Err(Error::invalid(format!(
            "cannot truncate: width {} exceeds pad target {target}",
            m.cols
        )));
    }
    let pad: Vec<String> = (m.cols..target).map(|i| format!("pad_{i}")).collect();
    let pad = FeatureMatrix::new(m.rows, pad.len(), vec![0.0; m.rows * pad.len()], pad)?;
    concat_columns(m, &pad)
}

/// Per-column population statistics for z-score scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScoreStats {
    pub fn is_constant(&self, col: usize) -> bool {
        self.std[col] == 0.0
    }

    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.std.len()).filter(|&c| self.is_constant(c)).collect()
    }

    fn check_width(&self, m: &FeatureMatrix) -> Result<()> {
        if m.cols != self.mean.len() {
            return Err(Error::shape(format!(
                "z-score stats cover {} columns, matrix has {}",
                self.mean.len(),
                m.cols
            )));
        }
        Ok(())
    }

    /// `x * std + mean`; constant columns come back as their mean.
    pub fn inverse(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check_width(m)?;
        let mut out = m.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            let c = i % m.cols;
            *v = *v * self.std[c] + self.mean[c];
        }
        Ok(out)
    }
}

/// Column means and population (1/n) standard deviations.
pub fn zscore_fit(m: &FeatureMatrix) -> Result<ZScoreStats> {
    if m.rows == 0 {
        return Err(Error::EmptyInput);
    }
    let n = m.rows as f64;
    let mut mean = vec![0.0; m.cols];
    for row in m.iter_rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m.cols];
    for row in m.iter_rows() {
        for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(ZScoreStats { mean, std })
}

/// `(x - mean) / std`, with constant columns mapped to 0.
pub fn zscore_apply(m: &FeatureMatrix, s: &ZScoreStats) -> Result<FeatureMatrix> {
    s.check_width(m)?;
    let mut out = m.clone();
    if m.cols == 0 {
        return Ok(out);
    }
    for (i, v) in out.values.iter_mut().enumerate() {
        let c = i % m.cols;
        *v = if s.std[c] == 0.0 {
            0.0
        } else {
            (*v - s.mean[c]) / s.std[c]
        };
    }
    Ok(out)
}
