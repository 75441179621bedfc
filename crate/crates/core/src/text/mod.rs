//! Transcript features: normalise, TF-IDF, LASSO then RFE selection, and
//! zero-padding to a fixed width.

mod normalize;
mod select;
mod tfidf;

pub use normalize::{
    normalize_text, SuffixRule, TextNormConfig, DEFAULT_LEMMA_EXCEPTIONS, DEFAULT_LEMMA_RULES,
    DEFAULT_STOPWORDS, MIN_STEM_CHARS,
};
pub use select::{
    lasso_coordinate_descent, lasso_select, one_vs_rest, rfe_select, LassoFit, LassoOptions,
    Provenance, RfeOutcome, SelectionMask, RFE_RIDGE,
};
pub use tfidf::{tfidf_fit, tfidf_matrix, tfidf_transform, VocabEntry, Vocabulary};

use serde::{Deserialize, Serialize};

use crate::data::{pad_columns, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextPipelineConfig {
    pub max_vocab: usize,
    pub lasso: LassoOptions,
    pub rfe_keep: usize,
    pub rfe_step: f64,
    pub pad_width: usize,
}

impl Default for TextPipelineConfig {
    fn default() -> Self {
        Self {
            max_vocab: 2000,
            lasso: LassoOptions::default(),
            rfe_keep: 512,
            rfe_step: 0.5,
            pad_width: 512,
        }
    }
}

/// Everything needed to featurise unseen transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedText {
    pub format: String,
    pub version: u32,
    pub vocabulary: Vocabulary,
    pub lasso_mask: SelectionMask,
    pub mask: SelectionMask,
    pub pad_width: usize,
}

pub const TEXT_ARTIFACT_FORMAT: &str = "fusent-text";

impl FittedText {
    /// Fit on tokenised training documents.
    pub fn fit(
        docs: &[Vec<String>],
        labels: &[usize],
        n_classes: usize,
        cfg: &TextPipelineConfig,
    ) -> Result<Self> {
        let vocabulary = tfidf_fit(docs, cfg.max_vocab)?;
        let x = tfidf_matrix(docs, &vocabulary);
        let mut lasso_mask = lasso_select(&x, labels, n_classes, &cfg.lasso)?;
        if lasso_mask.is_empty() {
            log::warn!("lasso kept no terms; running elimination on the full vocabulary");
            lasso_mask = SelectionMask::identity(x.cols(), Provenance::Lasso);
        }
        let survivors = lasso_mask.apply(&x)?;
        let keep = cfg.rfe_keep.min(cfg.pad_width).min(survivors.cols());
        let mask = if keep == 0 {
            SelectionMask::new(Vec::new(), Provenance::Rfe, x.cols())?
        } else {
            let rfe = rfe_select(&survivors, labels, n_classes, keep, cfg.rfe_step)?;
            log::info!(
                "text selection: vocab {} -> lasso {} -> rfe {} ({} rounds)",
                x.cols(),
                survivors.cols(),
                rfe.mask.len(),
                rfe.rounds
            );
            lasso_mask.compose(&rfe.mask)?
        };
        Ok(Self {
            format: TEXT_ARTIFACT_FORMAT.to_string(),
            version: 1,
            vocabulary,
            lasso_mask,
            mask,
            pad_width: cfg.pad_width,
        })
    }

    /// Full TF-IDF rows, before any selection.
    pub fn transform_raw(&self, docs: &[Vec<String>]) -> FeatureMatrix {
        tfidf_matrix(docs, &self.vocabulary)
    }

    /// Selected and padded rows; always exactly `pad_width` wide.
    pub fn transform(&self, docs: &[Vec<String>]) -> Result<FeatureMatrix> {
        let x = self.transform_raw(docs);
        pad_columns(&self.mask.apply(&x)?, self.pad_width)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("text artifact serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut a: FittedText = serde_json::from_str(s).map_err(|e| Error::format(e.to_string()))?;
        if a.format != TEXT_ARTIFACT_FORMAT || a.version != 1 {
            return Err(Error::format(format!("unsupported text artifact {} v{}", a.format, a.version)));
        }
        a.vocabulary = Vocabulary::new(a.vocabulary.n_docs, a.vocabulary.terms)?;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn corpus(n: usize, rng: &mut SeededRng) -> (Vec<Vec<String>>, Vec<usize>) {
        let cfg = TextNormConfig::bundled();
        let themes = [["sunny", "bright", "glad"], ["gloomy", "grey", "tired"], ["loud", "angry", "fierce"]];
        let filler = ["okay", "maybe", "really", "thing", "today"];
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 3;
            let mut words = Vec::new();
            for _ in 0..(3 + rng.below(6)) {
                if rng.bernoulli(0.5) {
                    words.push(themes[c][rng.below(3)]);
                } else {
                    words.push(filler[rng.below(5)]);
                }
            }
            docs.push(normalize_text(&words.join(" "), &cfg));
            labels.push(c);
        }
        (docs, labels)
    }

    #[test]
    fn pipeline_width_constant() {
        let mut rng = SeededRng::new(3);
        let (docs, labels) = corpus(60, &mut rng);
        let cfg = TextPipelineConfig {
            max_vocab: 50,
            lasso: LassoOptions { lambda: 0.1, ..Default::default() },
            rfe_keep: 6,
            rfe_step: 0.5,
            pad_width: 10,
        };
        let fitted = FittedText::fit(&docs, &labels, 3, &cfg).unwrap();
        assert!(fitted.mask.len() <= 6);
        let (test_docs, _) = corpus(20, &mut rng);
        let mut with_empty = test_docs.clone();
        with_empty.push(Vec::new());
        let x = fitted.transform(&with_empty).unwrap();
        assert_eq!(x.cols(), 10);
        assert_eq!(x.rows(), 21);
        assert!(x.row(20).iter().all(|&v| v == 0.0));
        let back = FittedText::from_json(&fitted.to_json()).unwrap();
        assert_eq!(back.transform(&test_docs).unwrap(), fitted.transform(&test_docs).unwrap());
    }

    #[test]
    fn informative_terms_survive() {
        let mut rng = SeededRng::new(8);
        let (docs, labels) = corpus(90, &mut rng);
        let cfg = TextPipelineConfig {
            max_vocab: 50,
            lasso: LassoOptions { lambda: 0.5, ..Default::default() },
            rfe_keep: 9,
            rfe_step: 0.5,
            pad_width: 12,
        };
        let fitted = FittedText::fit(&docs, &labels, 3, &cfg).unwrap();
        let kept: Vec<&str> = fitted
            .mask
            .indices
            .iter()
            .map(|&i| fitted.vocabulary.terms[i].term.as_str())
            .collect();
        for w in ["sunny", "gloomy", "angry"] {
            assert!(kept.contains(&w), "{w} missing from {kept:?}");
        }
    }
}
