use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `R_n@k` for each requested `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub num_contexts: usize,
    pub recalls: BTreeMap<usize, f64>,
}

impl EvalReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recalls.get(&k).copied()
    }
}

/// Position of the best-ranked positive when candidates are sorted by score
/// descending, ties kept in input order.
pub fn best_positive_rank(scores: &[f64], labels: &[bool]) -> Option<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l)
        .map(|(i, _)| {
            scores
                .iter()
                .enumerate()
                .filter(|&(j, &s)| s > scores[i] || (s == scores[i] && j < i))
                .count()
        })
        .min()
}

/// Fraction of contexts whose top-`k` candidates contain a positive, for
/// every `k` in `ks`. Each context is `(scores, labels)` over the same `n`
/// candidates.
pub fn recall_at_k(contexts: &[(Vec<f64>, Vec<bool>)], ks: &[usize]) -> Result<EvalReport> {
    let n = contexts.first().map_or(0, |c| c.0.len());
    if contexts.is_empty() || n == 0 {
        return Err(Error::Evaluation("no contexts to evaluate".into()));
    }
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::Evaluation(format!("k = {bad} outside 1..={n}")));
    }
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    for (i, (scores, labels)) in contexts.iter().enumerate() {
        if scores.len() != n || labels.len() != n {
            return Err(Error::Evaluation(format!("context {i} does not have {n} candidates")));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Evaluation(format!("context {i} has a NaN score")));
        }
        let rank = best_positive_rank(scores, labels)
            .ok_or_else(|| Error::Evaluation(format!("context {i} has no positive candidate")))?;
        for (&k, count) in hits.iter_mut() {
            if rank < k {
                *count += 1;
            }
        }
    }
    Ok(EvalReport {
        n,
        num_contexts: contexts.len(),
        recalls: hits
            .into_iter()
            .map(|(k, c)| (k, c as f64 / contexts.len() as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_resolve_by_input_order() {
        assert_eq!(best_positive_rank(&[0.5, 0.5], &[false, true]), Some(1));
        assert_eq!(best_positive_rank(&[0.5, 0.5], &[true, false]), Some(0));
        assert_eq!(best_positive_rank(&[0.1, 0.9, 0.3], &[true, false, false]), Some(2));
    }

    #[test]
    fn recall_is_monotone_and_complete() {
        let ctx = vec![
            (vec![0.1, 0.9, 0.3], vec![true, false, false]),
            (vec![0.8, 0.2, 0.3], vec![true, false, false]),
        ];
        let r = recall_at_k(&ctx, &[1, 2, 3]).unwrap();
        assert_eq!(r.recall(1), Some(0.5));
        assert_eq!(r.recall(2), Some(0.5));
        assert_eq!(r.recall(3), Some(1.0));
    }

    #[test]
    fn missing_positive_is_an_error() {
        let ctx = vec![(vec![0.1, 0.2], vec![false, false])];
        assert!(matches!(recall_at_k(&ctx, &[1]), Err(Error::Evaluation(_))));
        let ok = vec![(vec![0.1, 0.2], vec![false, true])];
        assert!(recall_at_k(&ok, &[3]).is_err());
    }
}
