use serde::{Deserialize, Serialize};

use crate::data::{concat_columns, FeatureMatrix};
use crate::error::{Error, Result};
use crate::gbdt::{gbdt_fit, GbdtConfig, GbdtModel};
use crate::rng::SeededRng;

/// Appends one-hot GBDT leaf memberships to a feature matrix.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LeafEmbedder {
    pub model: Option<GbdtModel>,
}

impl LeafEmbedder {
    pub fn fitted(model: GbdtModel) -> Self {
        Self { model: Some(model) }
    }

    /// Fits the ensemble on `(x, labels)` and returns the augmented matrix.
    pub fn fit_transform(
        &mut self,
        x: &FeatureMatrix,
        labels: &[usize],
        n_classes: usize,
        cfg: &GbdtConfig,
        rng: &mut SeededRng,
    ) -> Result<FeatureMatrix> {
        self.model = Some(gbdt_fit(x, labels, n_classes, cfg, rng)?);
        self.transform(x)
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::NotFitted("leaf embedder".into()))?;
        concat_columns(x, &model.leaf_one_hot(x)?)
    }

    pub fn appended_width(&self) -> usize {
        self.model.as_ref().map_or(0, |m| m.leaf_counts().iter().sum())
    }
}
