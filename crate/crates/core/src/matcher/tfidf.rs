//! Bag-of-words baseline: cosine between the tf-idf vectors of the
//! concatenated context and the response.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::text::normalized_terms;

/// Document frequencies over a training corpus. The idf is smoothed,
/// `ln((1 + N) / (1 + df)) + 1`, so unseen terms still count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    n_docs: usize,
    doc_freq: HashMap<String, usize>,
}

impl TfIdfModel {
    /// Each text is one document.
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let unique: HashSet<String> = normalized_terms(doc).into_iter().collect();
            for t in unique {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
        TfIdfModel { n_docs, doc_freq }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.doc_freq.get(term).copied().unwrap_or(0);
        ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    fn vector(&self, text: &str) -> HashMap<String, f64> {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in normalized_terms(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        tf.into_iter()
            .map(|(t, c)| {
                let w = c * self.idf(&t);
                (t, w)
            })
            .collect()
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        let (va, vb) = (self.vector(a), self.vector(b));
        let norm = |v: &HashMap<String, f64>| {
            let mut ws: Vec<f64> = v.values().map(|w| w * w).collect();
            ws.sort_by(f64::total_cmp);
            ws.iter().sum::<f64>().sqrt()
        };
        let (na, nb) = (norm(&va), norm(&vb));
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let mut terms: Vec<&String> = va.keys().filter(|t| vb.contains_key(*t)).collect();
        terms.sort();
        let dot: f64 = terms.iter().map(|t| va[*t] * vb[*t]).sum();
        dot / (na * nb)
    }

    /// Cosine between the space-joined context and the response.
    pub fn score(&self, context: &[String], response: &str) -> f64 {
        self.cosine(&context.join(" "), response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        let m = TfIdfModel::fit(["a b", "b c", "c d"]);
        assert!((m.cosine("a b c", "a b c") - 1.0).abs() < 1e-12);
        assert_eq!(m.cosine("a b", "c d"), 0.0);
        assert_eq!(m.cosine("", "c d"), 0.0);
    }

    #[test]
    fn hand_computed_three_terms() {
        // N = 3; df(x) = 1, df(y) = 2, df(z) = 0
        let m = TfIdfModel::fit(["x y", "y", "w"]);
        let idf_x = (4.0f64 / 2.0).ln() + 1.0;
        let idf_y = (4.0f64 / 3.0).ln() + 1.0;
        let idf_z = 4.0f64.ln() + 1.0;
        assert!((m.idf("x") - idf_x).abs() < 1e-15);
        assert!((m.idf("z") - idf_z).abs() < 1e-15);
        // a = "x x y", b = "y z"
        let a = [2.0 * idf_x, idf_y, 0.0];
        let b = [0.0, idf_y, idf_z];
        let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((m.cosine("x x y", "y z") - dot / (na * nb)).abs() < 1e-12);
    }
}
