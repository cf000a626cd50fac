//! Brute-force BM25 over plain word lists, used to check the inverted index.

use docbot::retrieval::{RetrievalConfig, SentenceIndex};
use docbot::text::{RawDocument, TextPipeline};

pub const WORDS: [&str; 12] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima",
];

#[derive(Debug, Clone)]
pub struct Case {
    pub sentences: Vec<Vec<usize>>,
    pub query: Vec<usize>,
    pub config: RetrievalConfig,
}

impl Case {
    pub fn text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| {
                let words: Vec<&str> = s.iter().map(|&w| WORDS[w]).collect();
                format!("{}.", words.join(" "))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn query_terms(&self) -> Vec<String> {
        self.query.iter().map(|&w| WORDS[w].to_string()).collect()
    }

    /// Score of every sentence, straight from the textbook formula.
    pub fn oracle_scores(&self) -> Vec<f64> {
        let n = self.sentences.len() as f64;
        let avg = self.sentences.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let mut query = self.query.clone();
        query.sort_by_key(|&w| WORDS[w]);
        query.dedup();
        let (k1, b) = (self.config.bm25_k1, self.config.bm25_b);
        self.sentences
            .iter()
            .map(|s| {
                let len = s.len() as f64;
                query
                    .iter()
                    .map(|&w| {
                        let tf = s.iter().filter(|&&x| x == w).count() as f64;
                        let df = self.sentences.iter().filter(|t| t.contains(&w)).count() as f64;
                        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg))
                    })
                    .sum()
            })
            .collect()
    }
}

/// Compares index scores and the top-k list with the oracle; `Err` describes
/// the first disagreement.
pub fn check(case: &Case) -> Result<(), String> {
    let sentences = TextPipeline::default()
        .preprocess(&RawDocument::new("d", case.text()))
        .map_err(|e| e.to_string())?;
    if sentences.len() != case.sentences.len() {
        return Err(format!("{} sentences, expected {}", sentences.len(), case.sentences.len()));
    }
    let index = SentenceIndex::build(sentences).map_err(|e| e.to_string())?;
    let expected = case.oracle_scores();
    let query = case.query_terms();
    let tol = |x: f64| 1e-9 * x.abs().max(1.0);
    for (i, &want) in expected.iter().enumerate() {
        let got = index.bm25_score(&query, docbot::retrieval::SentenceRef(i), &case.config);
        if (got - want).abs() > tol(want) {
            return Err(format!("sentence {i}: score {got}, oracle {want}"));
        }
    }
    let hits = index.retrieve_terms(&query, &case.config);
    let positive = expected.iter().filter(|&&s| s > 0.0).count();
    if hits.len() != positive.min(case.config.k) {
        return Err(format!("{} hits, expected {}", hits.len(), positive.min(case.config.k)));
    }
    for pair in hits.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if !(a.score > b.score || (a.score == b.score && a.sentence_ref < b.sentence_ref)) {
            return Err(format!("hits out of order: {:?} before {:?}", a.sentence_ref, b.sentence_ref));
        }
    }
    let returned: Vec<usize> = hits.iter().map(|h| h.sentence_ref.0).collect();
    for h in &hits {
        if (h.score - expected[h.sentence_ref.0]).abs() > tol(h.score) {
            return Err(format!("hit {:?} scored {}", h.sentence_ref, h.score));
        }
    }
    let floor = hits.last().map(|h| h.score).unwrap_or(0.0);
    for (i, &s) in expected.iter().enumerate() {
        if !returned.contains(&i) && s > 0.0 && s > floor + tol(floor) {
            return Err(format!("sentence {i} (oracle {s}) missing from the top {}", case.config.k));
        }
    }
    Ok(())
}
