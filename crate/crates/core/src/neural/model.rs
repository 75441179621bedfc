use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::layers::{Block, BlockCache, BlockGrad, BatchNorm, Dense, LayerSpec, MaskSource};
use super::loss::{mean_cross_entropy, softmax_rows};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// One input branch: a named encoder stack over one feature view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub name: String,
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

/// Full architecture: branches, whose outputs are concatenated in order,
/// then the hidden head layers and a softmax output of `n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub branches: Vec<BranchSpec>,
    pub head: Vec<LayerSpec>,
    pub n_classes: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() || self.n_classes < 2 {
            return Err(Error::invalid("model needs at least one branch and two classes"));
        }
        for b in &self.branches {
            if b.input_width == 0 {
                return Err(Error::invalid(format!("branch {:?} has zero input width", b.name)));
            }
        }
        let all = self.branches.iter().flat_map(|b| &b.layers).chain(&self.head);
        for l in all {
            if l.units == 0 || !(0.0..1.0).contains(&l.dropout) {
                return Err(Error::invalid("layers need units > 0 and dropout in [0, 1)"));
            }
        }
        Ok(())
    }

    pub fn branch_output_width(&self, b: usize) -> usize {
        let br = &self.branches[b];
        br.layers.last().map_or(br.input_width, |l| l.units)
    }

    pub fn fused_width(&self) -> usize {
        (0..self.branches.len()).map(|b| self.branch_output_width(b)).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model spec serialises")
    }
}

/// Rows of every branch input plus labels, materialised for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: usize,
    /// One row-major buffer per branch.
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn gather(views: &[&FeatureMatrix], labels: &[usize], idx: &[usize]) -> Self {
        let inputs = views
            .iter()
            .map(|m| {
                let mut buf = Vec::with_capacity(idx.len() * m.cols());
                for &i in idx {
                    buf.extend_from_slice(m.row(i));
                }
                buf
            })
            .collect();
        Self {
            rows: idx.len(),
            inputs,
            labels: idx.iter().map(|&i| labels[i]).collect(),
        }
    }

    pub fn full(views: &[&FeatureMatrix], labels: &[usize]) -> Self {
        let idx: Vec<usize> = (0..labels.len()).collect();
        Self::gather(views, labels, &idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Forward results and everything backward needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    pub rows: usize,
    pub mode: Mode,
    generation: u64,
    caches: Vec<BlockCache>,
}

impl ForwardPass {
    /// Dropout masks per block, in block order, for replaying the pass.
    pub fn masks(&self) -> Vec<Option<Vec<f64>>> {
        self.caches.iter().map(|c| c.mask.clone()).collect()
    }
}

/// Gradients aligned with [`FusionModel::trainable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<BlockGrad>,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.blocks {
            out.push(g.dw.as_slice());
            out.push(g.db.as_slice());
            if let (Some(a), Some(b)) = (&g.dgamma, &g.dbeta) {
                out.push(a.as_slice());
                out.push(b.as_slice());
            }
        }
        out
    }
}

/// Late-fusion network. Blocks are stored flat: each branch's encoder
/// blocks in branch order, then the head's hidden blocks, then the output
/// block.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub spec: ModelSpec,
    pub blocks: Vec<Block>,
    branch_ranges: Vec<Range<usize>>,
    head_range: Range<usize>,
    generation: u64,
}

impl FusionModel {
    /// Glorot-uniform weights, zero biases, identity batch-norm. Weights are
    /// drawn block by block in storage order.
    pub fn init(spec: &ModelSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let mut blocks = Vec::new();
        let mut branch_ranges = Vec::new();
        let make = |n_in: usize, l: &LayerSpec, rng: &mut SeededRng| Block {
            dense: Dense::glorot(n_in, l.units, rng),
            bn: l.batch_norm.then(|| BatchNorm::new(l.units)),
            relu: true,
            dropout: l.dropout,
        };
        for b in &spec.branches {
            let start = blocks.len();
            let mut w = b.input_width;
            for l in &b.layers {
                blocks.push(make(w, l, rng));
                w = l.units;
            }
            branch_ranges.push(start..blocks.len());
        }
        let start = blocks.len();
        let mut w = spec.fused_width();
        for l in &spec.head {
            blocks.push(make(w, l, rng));
            w = l.units;
        }
        blocks.push(Block {
            dense: Dense::glorot(w, spec.n_classes, rng),
            bn: None,
            relu: false,
            dropout: 0.0,
        });
        let head_range = start..blocks.len();
        Ok(Self {
            spec: spec.clone(),
            blocks,
            branch_ranges,
            head_range,
            generation: 0,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Trainable tensors in checkpoint order: per block `W, b` and, for
    /// batch-norm blocks, `γ, β`.
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(b.dense.w.as_slice());
            out.push(b.dense.b.as_slice());
            if let Some(bn) = &b.bn {
                out.push(bn.gamma.as_slice());
                out.push(bn.beta.as_slice());
            }
        }
        out
    }

    /// Mutable view of [`Self::trainable`]; invalidates outstanding caches.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(b.dense.w.as_mut_slice());
            out.push(b.dense.b.as_mut_slice());
            if let Some(bn) = &mut b.bn {
                out.push(bn.gamma.as_mut_slice());
                out.push(bn.beta.as_mut_slice());
            }
        }
        out
    }

    /// Batch-norm running statistics, `(mean, var)` per batch-norm block.
    pub fn running_stats(&self) -> Vec<&[f64]> {
        self.blocks
            .iter()
            .filter_map(|b| b.bn.as_ref())
            .flat_map(|bn| [bn.running_mean.as_slice(), bn.running_var.as_slice()])
            .collect()
    }

    pub fn running_stats_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.blocks
            .iter_mut()
            .filter_map(|b| b.bn.as_mut())
            .flat_map(|bn| [bn.running_mean.as_mut_slice(), bn.running_var.as_mut_slice()])
            .collect()
    }

    pub fn n_parameters(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.inputs.len() != self.spec.branches.len() {
            return Err(Error::shape(format!(
                "batch has {} inputs, model has {} branches",
                batch.inputs.len(),
                self.spec.branches.len()
            )));
        }
        for (b, x) in self.spec.branches.iter().zip(&batch.inputs) {
            if x.len() != batch.rows * b.input_width {
                return Err(Error::shape(format!(
                    "branch {:?} expects width {}, got {} values for {} rows",
                    b.name,
                    b.input_width,
                    x.len(),
                    batch.rows
                )));
            }
        }
        if batch.rows == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(())
    }

    fn run(&self, batch: &Batch, mode: Mode, mut masks: MaskSource<'_>, keep: bool) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        if let MaskSource::Fixed(m) = &masks {
            if m.len() != self.blocks.len() {
                return Err(Error::shape("dropout mask count does not match the model"));
            }
        }
        let rows = batch.rows;
        let train = mode == Mode::Train;
        let mut caches = Vec::with_capacity(if keep { self.blocks.len() } else { 0 });
        let mut step = |bi: usize, x: Vec<f64>, caches: &mut Vec<BlockCache>| {
            let block = &self.blocks[bi];
            let mask = if train && block.dropout > 0.0 {
                match &mut masks {
                    MaskSource::Sample(rng) => Some(block.sample_mask(rows * block.n_out(), rng)),
                    MaskSource::Fixed(m) => m[bi].clone(),
                    MaskSource::Off => None,
                }
            } else {
                None
            };
            let (y, cache) = block.forward(x, rows, train, mask, keep);
            if let Some(c) = cache {
                caches.push(c);
            }
            y
        };
        let fused_w = self.spec.fused_width();
        let mut fused = vec![0.0; rows * fused_w];
        let mut offset = 0;
        for (b, range) in self.branch_ranges.iter().enumerate() {
            let mut x = batch.inputs[b].clone();
            for bi in range.clone() {
                x = step(bi, x, &mut caches);
            }
            let w = self.spec.branch_output_width(b);
            for r in 0..rows {
                fused[r * fused_w + offset..r * fused_w + offset + w].copy_from_slice(&x[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut x = fused;
        for bi in self.head_range.clone() {
            x = step(bi, x, &mut caches);
        }
        let probs = softmax_rows(&x, self.spec.n_classes);
        Ok(ForwardPass {
            probs,
            logits: x,
            rows,
            mode,
            generation: self.generation,
            caches,
        })
    }

    /// Forward pass keeping activations. In train mode dropout masks are
    /// drawn from `rng` and batch-norm uses batch statistics; running
    /// statistics are only changed by [`Self::update_running_stats`].
    pub fn forward(&self, batch: &Batch, mode: Mode, rng: &mut SeededRng) -> Result<ForwardPass> {
        self.run(batch, mode, MaskSource::Sample(rng), true)
    }

    /// Train-mode style pass replaying given dropout masks.
    pub fn forward_with_masks(
        &self,
        batch: &Batch,
        mode: Mode,
        masks: &[Option<Vec<f64>>],
    ) -> Result<ForwardPass> {
        self.run(batch, mode, MaskSource::Fixed(masks), true)
    }

    /// Eval-mode probabilities without caching.
    pub fn predict_proba(&self, batch: &Batch) -> Result<Vec<f64>> {
        Ok(self.run(batch, Mode::Eval, MaskSource::Off, false)?.probs)
    }

    /// Eval-mode probabilities over many rows, processed in chunks.
    pub fn predict_views(&self, views: &[&FeatureMatrix], labels: &[usize], chunk: usize) -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..labels.len()).collect();
        self.predict_rows(views, labels, &idx, chunk)
    }

    /// Like [`FusionModel::predict_views`] restricted to the view rows `rows`.
    pub fn predict_rows(
        &self,
        views: &[&FeatureMatrix],
        labels: &[usize],
        rows: &[usize],
        chunk: usize,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows.len() * self.n_classes());
        for part in rows.chunks(chunk.max(1)) {
            out.extend(self.predict_proba(&Batch::gather(views, labels, part))?);
        }
        Ok(out)
    }

    pub fn loss(&self, pass: &ForwardPass, labels: &[usize]) -> Result<f64> {
        mean_cross_entropy(&pass.probs, labels, self.spec.n_classes)
    }

    /// Exact gradients of the mean cross-entropy for the cached pass.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Gradients> {
        if pass.generation != self.generation || pass.caches.len() != self.blocks.len() {
            return Err(Error::invalid(
                "stale forward cache: the model changed after this forward pass",
            ));
        }
        if labels.len() != pass.rows {
            return Err(Error::shape(format!("{} labels for a {}-row pass", labels.len(), pass.rows)));
        }
        let k = self.spec.n_classes;
        if let Some(&y) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::LabelOutOfRange {
                label: y,
                detail: format!("model has {k} classes"),
            });
        }
        let rows = pass.rows;
        let train = pass.mode == Mode::Train;
        let mut grads = Gradients {
            blocks: self.blocks.iter().map(BlockGrad::zeros).collect(),
        };
        let n = rows as f64;
        let mut d: Vec<f64> = pass.probs.iter().map(|p| p / n).collect();
        for (r, &y) in labels.iter().enumerate() {
            d[r * k + y] -= 1.0 / n;
        }
        for bi in self.head_range.clone().rev() {
            d = self.blocks[bi]
                .backward(&pass.caches[bi], d, rows, train, &mut grads.blocks[bi], true)
                .expect("dx requested");
        }
        let fused_w = self.spec.fused_width();
        let mut offset = 0;
        for (b, range) in self.branch_ranges.iter().enumerate() {
            let w = self.spec.branch_output_width(b);
            let mut db: Vec<f64> = (0..rows)
                .flat_map(|r| d[r * fused_w + offset..r * fused_w + offset + w].iter().copied())
                .collect();
            for bi in range.clone().rev() {
                let want = bi != range.start;
                match self.blocks[bi].backward(&pass.caches[bi], db, rows, train, &mut grads.blocks[bi], want) {
                    Some(next) => db = next,
                    None => break,
                }
            }
            offset += w;
        }
        Ok(grads)
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// averages.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        if pass.mode != Mode::Train || pass.caches.len() != self.blocks.len() {
            return;
        }
        for (b, c) in self.blocks.iter_mut().zip(&pass.caches) {
            if let Some(bn) = &mut b.bn {
                bn.update_running(&c.batch_mean, &c.batch_var);
            }
        }
        self.generation += 1;
    }
}
