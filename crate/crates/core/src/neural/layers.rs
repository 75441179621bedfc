//! Dense, batch-norm, ReLU and dropout blocks with their backward passes.
//!
//! Dense weights are stored input-major (`w[i * out + j]`), i.e. the
//! transpose of the usual `out × in` matrix, so forward and weight-gradient
//! kernels are row axpys that skip zero inputs. Sparse inputs such as
//! TF-IDF rows and leaf one-hots cost proportionally to their non-zeros.

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_in × n_out`, input-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut SeededRng) -> Self {
        let limit = glorot_limit(n_in, n_out);
        Self {
            n_in,
            n_out,
            w: (0..n_in * n_out).map(|_| rng.uniform(-limit, limit)).collect(),
            b: vec![0.0; n_out],
        }
    }

    /// `x W + b` for `rows` input rows.
    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (ni, no) = (self.n_in, self.n_out);
        let mut out = Vec::with_capacity(rows * no);
        for r in 0..rows {
            out.extend_from_slice(&self.b);
            let o = &mut out[r * no..(r + 1) * no];
            for (i, &xv) in x[r * ni..(r + 1) * ni].iter().enumerate() {
                if xv != 0.0 {
                    axpy(xv, &self.w[i * no..(i + 1) * no], o);
                }
            }
        }
        out
    }

    /// Accumulates `dW = xᵀ dz`, `db = Σ dz`; returns `dz Wᵀ` when asked.
    pub fn backward(
        &self,
        x: &[f64],
        dz: &[f64],
        rows: usize,
        dw: &mut [f64],
        db: &mut [f64],
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let (ni, no) = (self.n_in, self.n_out);
        for r in 0..rows {
            let d = &dz[r * no..(r + 1) * no];
            axpy(1.0, d, db);
            for (i, &xv) in x[r * ni..(r + 1) * ni].iter().enumerate() {
                if xv != 0.0 {
                    axpy(xv, d, &mut dw[i * no..(i + 1) * no]);
                }
            }
        }
        want_dx.then(|| {
            let mut dx = vec![0.0; rows * ni];
            for r in 0..rows {
                let d = &dz[r * no..(r + 1) * no];
                for i in 0..ni {
                    dx[r * ni + i] = dot(d, &self.w[i * no..(i + 1) * no]);
                }
            }
            dx
        })
    }
}

pub fn glorot_limit(n_in: usize, n_out: usize) -> f64 {
    (6.0 / (n_in + n_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(units: usize) -> Self {
        Self {
            gamma: vec![1.0; units],
            beta: vec![0.0; units],
            running_mean: vec![0.0; units],
            running_var: vec![1.0; units],
        }
    }

    /// `running ← momentum · running + (1 − momentum) · batch`.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        for (r, m) in self.running_mean.iter_mut().zip(mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
        }
        for (r, v) in self.running_var.iter_mut().zip(var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
    }
}

/// Per-block layer description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub units: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub batch_norm: bool,
}

impl LayerSpec {
    pub const fn new(units: usize, dropout: f64, batch_norm: bool) -> Self {
        Self {
            units,
            dropout,
            batch_norm,
        }
    }
}

/// Dense → optional batch-norm → optional ReLU → optional dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub dense: Dense,
    pub bn: Option<BatchNorm>,
    pub relu: bool,
    pub dropout: f64,
}

impl Block {
    pub fn n_out(&self) -> usize {
        self.dense.n_out
    }
}

/// Intermediate values a block keeps for its backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub input: Vec<f64>,
    /// Normalised pre-activations and `1/sqrt(var + ε)` per unit.
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    /// Post-affine, pre-ReLU values (ReLU gate).
    pub pre_act: Vec<f64>,
    pub mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub dgamma: Option<Vec<f64>>,
    pub dbeta: Option<Vec<f64>>,
}

impl BlockGrad {
    pub fn zeros(b: &Block) -> Self {
        Self {
            dw: vec![0.0; b.dense.w.len()],
            db: vec![0.0; b.dense.n_out],
            dgamma: b.bn.as_ref().map(|bn| vec![0.0; bn.gamma.len()]),
            dbeta: b.bn.as_ref().map(|bn| vec![0.0; bn.beta.len()]),
        }
    }
}

pub(crate) enum MaskSource<'a> {
    Sample(&'a mut SeededRng),
    Fixed(&'a [Option<Vec<f64>>]),
    Off,
}

impl Block {
    pub(crate) fn forward(
        &self,
        x: Vec<f64>,
        rows: usize,
        train: bool,
        mask: Option<Vec<f64>>,
        keep_cache: bool,
    ) -> (Vec<f64>, Option<BlockCache>) {
        let no = self.dense.n_out;
        let mut z = self.dense.forward(&x, rows);
        let (mut xhat, mut inv_std, mut bmean, mut bvar) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        if let Some(bn) = &self.bn {
            let (mean, var) = if train {
                let n = rows as f64;
                let mut mean = vec![0.0; no];
                for r in 0..rows {
                    axpy(1.0, &z[r * no..(r + 1) * no], &mut mean);
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; no];
                for r in 0..rows {
                    for j in 0..no {
                        var[j] += (z[r * no + j] - mean[j]).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                (mean, var)
            } else {
                (bn.running_mean.clone(), bn.running_var.clone())
            };
            inv_std = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            xhat = vec![0.0; rows * no];
            for r in 0..rows {
                for j in 0..no {
                    let h = (z[r * no + j] - mean[j]) * inv_std[j];
                    xhat[r * no + j] = h;
                    z[r * no + j] = bn.gamma[j] * h + bn.beta[j];
                }
            }
            bmean = mean;
            bvar = var;
        }
        let pre_act = if keep_cache && self.relu { z.clone() } else { Vec::new() };
        if self.relu {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        if let Some(m) = &mask {
            for (v, k) in z.iter_mut().zip(m) {
                *v *= k;
            }
        }
        let cache = keep_cache.then(|| BlockCache {
            input: x,
            xhat,
            inv_std,
            batch_mean: bmean,
            batch_var: bvar,
            pre_act,
            mask,
        });
        (z, cache)
    }

    pub(crate) fn sample_mask(&self, len: usize, rng: &mut SeededRng) -> Vec<f64> {
        let keep = 1.0 - self.dropout;
        let scale = 1.0 / keep;
        (0..len)
            .map(|_| if rng.next_f64() < keep { scale } else { 0.0 })
            .collect()
    }

    pub(crate) fn backward(
        &self,
        cache: &BlockCache,
        mut d: Vec<f64>,
        rows: usize,
        train: bool,
        grad: &mut BlockGrad,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let no = self.dense.n_out;
        if let Some(m) = &cache.mask {
            for (v, k) in d.iter_mut().zip(m) {
                *v *= k;
            }
        }
        if self.relu {
            for (v, p) in d.iter_mut().zip(&cache.pre_act) {
                if *p <= 0.0 {
                    *v = 0.0;
                }
            }
        }
        if let Some(bn) = &self.bn {
            let dgamma = grad.dgamma.as_mut().expect("bn gradient slot");
            let dbeta = grad.dbeta.as_mut().expect("bn gradient slot");
            let mut sum_dh = vec![0.0; no];
            let mut sum_dh_h = vec![0.0; no];
            for r in 0..rows {
                for j in 0..no {
                    let i = r * no + j;
                    dgamma[j] += d[i] * cache.xhat[i];
                    dbeta[j] += d[i];
                    let dh = d[i] * bn.gamma[j];
                    sum_dh[j] += dh;
                    sum_dh_h[j] += dh * cache.xhat[i];
                    d[i] = dh;
                }
            }
            let n = rows as f64;
            for r in 0..rows {
                for j in 0..no {
                    let i = r * no + j;
                    d[i] = if train {
                        cache.inv_std[j] / n * (n * d[i] - sum_dh[j] - cache.xhat[i] * sum_dh_h[j])
                    } else {
                        d[i] * cache.inv_std[j]
                    };
                }
            }
        }
        self.dense
            .backward(&cache.input, &d, rows, &mut grad.dw, &mut grad.db, want_dx)
    }
}
