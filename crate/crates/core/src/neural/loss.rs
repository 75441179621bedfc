use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (z, p) in logits.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (pi, zi) in p.iter_mut().zip(z) {
            *pi = (zi - m).exp();
            s += *pi;
        }
        p.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Mean of `−ln max(p[y], 1e−12)` over rows of a `n × k` probability matrix.
pub fn mean_cross_entropy(probs: &[f64], labels: &[usize], k: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if probs.len() != labels.len() * k {
        return Err(Error::shape(format!(
            "{} probabilities for {} rows of {k} classes",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in probs.chunks_exact(k).zip(labels) {
        if y >= k {
            return Err(Error::LabelOutOfRange {
                label: y,
                detail: format!("{k} classes"),
            });
        }
        total -= row[y].max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}
