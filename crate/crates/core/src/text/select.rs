//! Supervised column selection: L1-penalised one-vs-rest regression and
//! recursive elimination under a ridge scorer.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Lasso,
    Rfe,
}

/// Retained source columns, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    pub indices: Vec<usize>,
    pub provenance: Provenance,
    pub source_width: usize,
}

impl SelectionMask {
    pub fn new(indices: Vec<usize>, provenance: Provenance, source_width: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("selection indices must be strictly increasing"));
        }
        if indices.last().is_some_and(|&i| i >= source_width) {
            return Err(Error::invalid("selection index outside source width"));
        }
        Ok(Self {
            indices,
            provenance,
            source_width,
        })
    }

    pub fn identity(width: usize, provenance: Provenance) -> Self {
        Self {
            indices: (0..width).collect(),
            provenance,
            source_width: width,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.cols() != self.source_width {
            return Err(Error::shape(format!(
                "mask expects width {}, matrix has {}",
                self.source_width,
                m.cols()
            )));
        }
        m.select_cols(&self.indices)
    }

    /// Express a mask fitted on `self`'s output in source coordinates.
    pub fn compose(&self, inner: &SelectionMask) -> Result<SelectionMask> {
        if inner.source_width != self.len() {
            return Err(Error::shape("inner mask width does not match outer selection"));
        }
        SelectionMask::new(
            inner.indices.iter().map(|&i| self.indices[i]).collect(),
            inner.provenance,
            self.source_width,
        )
    }
}

/// ±1 one-vs-rest targets for class `c`.
pub fn one_vs_rest(labels: &[usize], c: usize) -> Vec<f64> {
    labels
        .iter()
        .map(|&y| if y == c { 1.0 } else { -1.0 })
        .collect()
}

/// Column-major sparse copy of a matrix with column means, so centred
/// columns can be handled without densifying.
struct Columns {
    n: usize,
    idx: Vec<Vec<usize>>,
    val: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

impl Columns {
    fn new(x: &FeatureMatrix, center: bool) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let mut idx = vec![Vec::new(); p];
        let mut val = vec![Vec::new(); p];
        for r in 0..n {
            for (j, &v) in x.row(r).iter().enumerate() {
                if v != 0.0 {
                    idx[j].push(r);
                    val[j].push(v);
                }
            }
        }
        let mean = if center && n > 0 {
            val.iter().map(|v| v.iter().sum::<f64>() / n as f64).collect()
        } else {
            vec![0.0; p]
        };
        Self { n, idx, val, mean }
    }

    /// Squared norm of the (possibly centred) column.
    fn norm_sq(&self, j: usize) -> f64 {
        let raw: f64 = self.val[j].iter().map(|v| v * v).sum();
        raw - self.n as f64 * self.mean[j] * self.mean[j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoOptions {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub fit_intercept: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_iter: 1000,
            tol: 1e-6,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `½‖y − Xβ − b‖² + λ‖β‖₁`.
///
/// With `fit_intercept` the columns and target are centred implicitly; the
/// residual is kept as a sparse part plus a shared offset so sparse inputs
/// stay cheap. Stops when the largest coefficient change of a sweep falls
/// below `tol`, or after `max_iter` sweeps.
pub fn lasso_coordinate_descent(x: &FeatureMatrix, y: &[f64], opts: &LassoOptions) -> Result<LassoFit> {
    if !(opts.lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {}", opts.lambda)));
    }
    if y.len() != x.rows() {
        return Err(Error::shape(format!("{} targets for {} rows", y.len(), x.rows())));
    }
    let cols = Columns::new(x, opts.fit_intercept);
    Ok(lasso_on_columns(&cols, y, opts))
}

fn lasso_on_columns(cols: &Columns, y: &[f64], opts: &LassoOptions) -> LassoFit {
    let n = cols.n;
    let p = cols.idx.len();
    let y_mean = if opts.fit_intercept && n > 0 {
        y.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    // r_i = r_sparse_i + offset
    let mut r_sparse: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut offset = 0.0;
    let mut sum_r: f64 = r_sparse.iter().sum();
    let norms: Vec<f64> = (0..p).map(|j| cols.norm_sq(j)).collect();
    let mut coef = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if norms[j] <= 1e-300 {
                continue;
            }
            let mu = cols.mean[j];
            let dot: f64 = cols.idx[j]
                .iter()
                .zip(&cols.val[j])
                .map(|(&i, &v)| v * (r_sparse[i] + offset))
                .sum::<f64>()
                - mu * sum_r;
            let rho = dot + norms[j] * coef[j];
            let new = soft_threshold(rho, opts.lambda) / norms[j];
            let delta = new - coef[j];
            if delta != 0.0 {
                for (&i, &v) in cols.idx[j].iter().zip(&cols.val[j]) {
                    r_sparse[i] -= v * delta;
                }
                offset += mu * delta;
                sum_r -= (cols.val[j].iter().sum::<f64>() - n as f64 * mu) * delta;
                coef[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < opts.tol {
            converged = true;
            break;
        }
    }
    let intercept = y_mean - cols.mean.iter().zip(&coef).map(|(m, b)| m * b).sum::<f64>();
    LassoFit {
        coef,
        intercept,
        iterations,
        converged,
    }
}

/// Union over classes of columns with a nonzero one-vs-rest LASSO coefficient.
pub fn lasso_select(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    opts: &LassoOptions,
) -> Result<SelectionMask> {
    if !(opts.lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {}", opts.lambda)));
    }
    if labels.len() != x.rows() {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), x.rows())));
    }
    let cols = Columns::new(x, opts.fit_intercept);
    let mut keep = vec![false; x.cols()];
    for c in 0..n_classes {
        let fit = lasso_on_columns(&cols, &one_vs_rest(labels, c), opts);
        if !fit.converged {
            log::debug!("lasso class {c}: hit max_iter {}", opts.max_iter);
        }
        for (k, b) in keep.iter_mut().zip(&fit.coef) {
            *k |= *b != 0.0;
        }
    }
    let indices: Vec<usize> = (0..x.cols()).filter(|&j| keep[j]).collect();
    if indices.is_empty() {
        log::warn!("lasso (lambda = {}) eliminated every column", opts.lambda);
    }
    SelectionMask::new(indices, Provenance::Lasso, x.cols())
}

pub const RFE_RIDGE: f64 = 1e-3;

/// Centred Gram matrix `X̃ᵀX̃` and per-class `X̃ᵀỹ`, built from sparse rows.
struct RidgeStats {
    gram: Vec<f64>,
    xty: Vec<Vec<f64>>,
    p: usize,
}

impl RidgeStats {
    fn new(x: &FeatureMatrix, labels: &[usize], n_classes: usize) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let nf = n as f64;
        let mut gram = vec![0.0; p * p];
        let mut mean = vec![0.0; p];
        let mut nz: Vec<(usize, f64)> = Vec::new();
        let targets: Vec<Vec<f64>> = (0..n_classes).map(|c| one_vs_rest(labels, c)).collect();
        let mut xty = vec![vec![0.0; p]; n_classes];
        for r in 0..n {
            nz.clear();
            nz.extend(x.row(r).iter().copied().enumerate().filter(|(_, v)| *v != 0.0));
            for &(a, va) in &nz {
                mean[a] += va;
                for &(b, vb) in &nz {
                    gram[a * p + b] += va * vb;
                }
                for c in 0..n_classes {
                    xty[c][a] += va * targets[c][r];
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        for a in 0..p {
            for b in 0..p {
                gram[a * p + b] -= nf * mean[a] * mean[b];
            }
        }
        for (c, t) in targets.iter().enumerate() {
            let ysum: f64 = t.iter().sum();
            for a in 0..p {
                xty[c][a] -= mean[a] * ysum;
            }
        }
        Self { gram, xty, p }
    }

    /// Ridge coefficients restricted to `active`, one vector per class.
    fn fit(&self, active: &[usize], ridge: f64) -> Result<Vec<Vec<f64>>> {
        let k = active.len();
        let mut a = vec![0.0; k * k];
        for (i, &ai) in active.iter().enumerate() {
            for (j, &aj) in active.iter().enumerate() {
                a[i * k + j] = self.gram[ai * self.p + aj];
            }
            a[i * k + i] += ridge;
        }
        linalg::cholesky(&mut a, k)?;
        Ok(self
            .xty
            .iter()
            .map(|xty| {
                let b: Vec<f64> = active.iter().map(|&j| xty[j]).collect();
                linalg::cholesky_solve(&a, k, &b)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfeOutcome {
    pub mask: SelectionMask,
    pub rounds: usize,
}

/// Recursive feature elimination.
///
/// Each round refits a ridge (λ = 1e-3) one-vs-rest scorer on the surviving
/// columns, ranks them by summed absolute coefficient, and drops the
/// ⌈`step_fraction` × (survivors − `keep`)⌉ lowest, until `keep` remain.
pub fn rfe_select(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    keep: usize,
    step_fraction: f64,
) -> Result<RfeOutcome> {
    if keep > x.cols() {
        return Err(Error::invalid(format!(
            "cannot keep {keep} of {} columns",
            x.cols()
        )));
    }
    if keep == 0 {
        return Err(Error::invalid("rfe keep must be at least 1"));
    }
    if !(step_fraction > 0.0 && step_fraction <= 0.5) {
        return Err(Error::invalid(format!(
            "step_fraction must lie in (0, 0.5], got {step_fraction}"
        )));
    }
    if labels.len() != x.rows() {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), x.rows())));
    }
    let stats = RidgeStats::new(x, labels, n_classes);
    let mut active: Vec<usize> = (0..x.cols()).collect();
    let mut rounds = 0;
    while active.len() > keep {
        let coefs = stats.fit(&active, RFE_RIDGE)?;
        let mut scored: Vec<(f64, usize)> = active
            .iter()
            .enumerate()
            .map(|(i, &j)| (coefs.iter().map(|b| b[i].abs()).sum::<f64>(), j))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let excess = active.len() - keep;
        let drop = ((step_fraction * excess as f64).ceil() as usize).clamp(1, excess);
        let mut survivors: Vec<usize> = scored[drop..].iter().map(|&(_, j)| j).collect();
        survivors.sort_unstable();
        active = survivors;
        rounds += 1;
    }
    Ok(RfeOutcome {
        mask: SelectionMask::new(active, Provenance::Rfe, x.cols())?,
        rounds,
    })
}
