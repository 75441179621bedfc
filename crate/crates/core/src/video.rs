//! Motion-capture descriptor preparation: gap filling and GBDT probability
//! stacking.
//!
//! Missing cells arrive as NaN. [`interpolate_missing`] fills them per
//! column, either linearly along row order (rows treated as a session
//! sequence) or with the column median. [`VideoStacker`] appends the K
//! softmax probabilities of a GBDT fitted on the standardised table. When
//! producing training features the probabilities come from out-of-fold
//! models so no row is scored by a model that saw its label.

use serde::{Deserialize, Serialize};

use crate::data::{concat_columns, FeatureMatrix};
use crate::error::{Error, Result};
use crate::gbdt::{gbdt_fit, GbdtConfig, GbdtModel};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapFill {
    #[default]
    Linear,
    Median,
}

fn fill_linear(col: &mut [f64]) {
    let known: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_finite()).collect();
    let (first, last) = (known[0], *known.last().unwrap());
    for i in 0..first {
        col[i] = col[first];
    }
    for i in last + 1..col.len() {
        col[i] = col[last];
    }
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (va, vb) = (col[a], col[b]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            col[i] = va + t * (vb - va);
        }
    }
}

fn fill_median(col: &mut [f64]) {
    let mut known: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
    known.sort_unstable_by(f64::total_cmp);
    let n = known.len();
    let med = if n % 2 == 1 {
        known[n / 2]
    } else {
        0.5 * (known[n / 2 - 1] + known[n / 2])
    };
    col.iter_mut().filter(|v| !v.is_finite()).for_each(|v| *v = med);
}

/// Fills every non-finite cell. A column with no finite value is an error.
pub fn interpolate_missing(m: &FeatureMatrix, mode: GapFill) -> Result<FeatureMatrix> {
    let mut out = m.clone();
    if m.rows() == 0 {
        return Ok(out);
    }
    for c in 0..m.cols() {
        let mut col = m.column(c);
        if col.iter().all(|v| v.is_finite()) {
            continue;
        }
        if !col.iter().any(|v| v.is_finite()) {
            return Err(Error::invalid(format!(
                "video column {:?} has no finite values to interpolate from",
                m.col_names()[c]
            )));
        }
        match mode {
            GapFill::Linear => fill_linear(&mut col),
            GapFill::Median => fill_median(&mut col),
        }
        for (r, v) in col.into_iter().enumerate() {
            out.set(r, c, v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StackingMode {
    /// Training rows receive probabilities from models fitted on the other
    /// folds.
    OutOfFold { folds: usize },
    /// Training rows are scored by the model fitted on all of them.
    InSample,
}

impl Default for StackingMode {
    fn default() -> Self {
        StackingMode::OutOfFold { folds: 5 }
    }
}

pub fn probability_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("gbdt_p{c}")).collect()
}

fn proba_matrix(model: &GbdtModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    let p = model.predict_proba(x)?;
    FeatureMatrix::new(x.rows(), model.n_classes, p, probability_names(model.n_classes))
}

/// `[features | GBDT softmax probabilities]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VideoStacker {
    pub model: Option<GbdtModel>,
}

impl VideoStacker {
    pub fn fit_transform(
        &mut self,
        x: &FeatureMatrix,
        labels: &[usize],
        n_classes: usize,
        cfg: &GbdtConfig,
        mode: StackingMode,
        rng: &mut SeededRng,
    ) -> Result<FeatureMatrix> {
        let full = gbdt_fit(x, labels, n_classes, cfg, rng)?;
        let probs = match mode {
            StackingMode::InSample => proba_matrix(&full, x)?,
            StackingMode::OutOfFold { folds } => {
                if folds < 2 || folds > x.rows() {
                    return Err(Error::invalid(format!(
                        "out-of-fold stacking needs 2 <= folds <= rows, got {folds} folds for {} rows",
                        x.rows()
                    )));
                }
                let mut order: Vec<usize> = (0..x.rows()).collect();
                rng.shuffle(&mut order);
                let mut fold_of = vec![0; x.rows()];
                for (pos, &i) in order.iter().enumerate() {
                    fold_of[i] = pos % folds;
                }
                let mut values = vec![0.0; x.rows() * n_classes];
                for f in 0..folds {
                    let (fit_rows, held): (Vec<usize>, Vec<usize>) =
                        (0..x.rows()).partition(|&i| fold_of[i] != f);
                    let fit_labels: Vec<usize> = fit_rows.iter().map(|&i| labels[i]).collect();
                    let m = gbdt_fit(&x.select_rows(&fit_rows), &fit_labels, n_classes, cfg, rng)?;
                    let p = m.predict_proba(&x.select_rows(&held))?;
                    for (j, &i) in held.iter().enumerate() {
                        values[i * n_classes..(i + 1) * n_classes]
                            .copy_from_slice(&p[j * n_classes..(j + 1) * n_classes]);
                    }
                }
                FeatureMatrix::new(x.rows(), n_classes, values, probability_names(n_classes))?
            }
        };
        self.model = Some(full);
        concat_columns(x, &probs)
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::NotFitted("video stacker".into()))?;
        concat_columns(x, &proba_matrix(model, x)?)
    }
}
