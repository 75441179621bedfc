use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub term: String,
    pub index: usize,
    pub df: usize,
}

/// Fitted TF-IDF vocabulary. Terms are indexed in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub n_docs: usize,
    pub terms: Vec<VocabEntry>,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(n_docs: usize, terms: Vec<VocabEntry>) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if t.index != i {
                return Err(Error::format(format!("vocabulary index {} at position {i}", t.index)));
            }
            if t.df == 0 || t.df > n_docs {
                return Err(Error::format(format!("term {:?} has df {}", t.term, t.df)));
            }
        }
        let lookup = terms.iter().map(|t| (t.term.clone(), t.index)).collect();
        Ok(Self {
            n_docs,
            terms,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.lookup.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.terms[i].df)
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        let n = self.n_docs as f64;
        ((1.0 + n) / (1.0 + self.terms[index].df as f64)).ln() + 1.0
    }

    pub fn column_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| format!("tfidf_{}", t.term)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: Vocabulary = serde_json::from_str(s).map_err(|e| Error::format(e.to_string()))?;
        Self::new(v.n_docs, v.terms)
    }
}

/// Keep the `max_vocab` most frequent terms (collection frequency, ties by
/// term order) and record their document frequencies.
pub fn tfidf_fit(corpus: &[Vec<String>], max_vocab: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cf: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for doc in corpus {
        let mut seen: Vec<&str> = Vec::new();
        for t in doc {
            let e = cf.entry(t.as_str()).or_default();
            e.0 += 1;
            if !seen.contains(&t.as_str()) {
                seen.push(t);
                e.1 += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize, usize)> = cf.into_iter().map(|(t, (c, d))| (t, c, d)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_vocab);
    ranked.sort_by(|a, b| a.0.cmp(b.0));
    let terms = ranked
        .into_iter()
        .enumerate()
        .map(|(index, (term, _, df))| VocabEntry {
            term: term.to_string(),
            index,
            df,
        })
        .collect();
    Vocabulary::new(corpus.len(), terms)
}

/// Raw term counts times smoothed idf, then L2-normalised. Unknown tokens
/// are ignored; a row with no known token stays all-zero.
pub fn tfidf_transform(doc: &[String], v: &Vocabulary) -> Vec<f64> {
    let mut row = vec![0.0; v.len()];
    for t in doc {
        if let Some(i) = v.index_of(t) {
            row[i] += 1.0;
        }
    }
    for (i, w) in row.iter_mut().enumerate() {
        if *w != 0.0 {
            *w *= v.idf(i);
        }
    }
    let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter_mut().for_each(|w| *w /= norm);
    }
    row
}

pub fn tfidf_matrix(docs: &[Vec<String>], v: &Vocabulary) -> FeatureMatrix {
    let mut values = Vec::with_capacity(docs.len() * v.len());
    for d in docs {
        values.extend(tfidf_transform(d, v));
    }
    FeatureMatrix::new(docs.len(), v.len(), values, v.column_names()).expect("consistent shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(spec: &[&[&str]]) -> Vec<Vec<String>> {
        spec.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn fit_counts() {
        let v = tfidf_fit(&docs(&[&["a", "b"], &["b", "c"]]), 10).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.df("b"), Some(2));
        assert_eq!(v.df("a"), Some(1));
        assert_eq!(v.df("c"), Some(1));
        assert_eq!(v.n_docs, 2);
    }

    #[test]
    fn fit_truncates_by_frequency() {
        let v = tfidf_fit(&docs(&[&["a", "b"], &["b", "c"]]), 1).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.terms[0].term, "b");
    }

    #[test]
    fn fit_single_doc() {
        let v = tfidf_fit(&docs(&[&["x", "y", "x"]]), 10).unwrap();
        assert!(v.terms.iter().all(|t| t.df == 1));
    }

    #[test]
    fn fit_empty_corpus() {
        assert!(tfidf_fit(&[], 5).is_err());
    }

    #[test]
    fn transform_hand_values() {
        // a: 1 * (ln(3/2) + 1) = 1.405465..., b: 1 * (ln 1 + 1) = 1
        let corpus = docs(&[&["a", "b"], &["b", "c"]]);
        let v = tfidf_fit(&corpus, 10).unwrap();
        let row = tfidf_transform(&corpus[0], &v);
        let a = (1.5f64).ln() + 1.0;
        let norm = (a * a + 1.0).sqrt();
        assert!((row[0] - a / norm).abs() < 1e-12);
        assert!((row[1] - 1.0 / norm).abs() < 1e-12);
        assert_eq!(row[2], 0.0);
        assert!((row[0] - 0.8148).abs() < 1e-4 && (row[1] - 0.5797).abs() < 1e-4);
    }

    #[test]
    fn transform_oov_is_zero() {
        let v = tfidf_fit(&docs(&[&["a"]]), 10).unwrap();
        assert_eq!(tfidf_transform(&docs(&[&["zz", "qq"]])[0], &v), vec![0.0]);
    }

    #[test]
    fn single_doc_proportional_to_counts() {
        let corpus = docs(&[&["x", "y", "x"]]);
        let v = tfidf_fit(&corpus, 10).unwrap();
        let row = tfidf_transform(&corpus[0], &v);
        assert!((row[0] / row[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let v = tfidf_fit(&docs(&[&["a", "b"], &["b", "c"]]), 10).unwrap();
        assert_eq!(Vocabulary::from_json(&v.to_json()).unwrap(), v);
        assert_eq!(Vocabulary::from_json(&v.to_json()).unwrap().index_of("c"), Some(2));
    }

    proptest! {
        #[test]
        fn rows_unit_or_zero(corpus in proptest::collection::vec(
            proptest::collection::vec("[a-e]", 0..6), 1..8))
        {
            let v = tfidf_fit(&corpus, 3).unwrap();
            for d in &corpus {
                let n: f64 = tfidf_transform(d, &v).iter().map(|w| w * w).sum::<f64>().sqrt();
                prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            }
        }
    }
}
