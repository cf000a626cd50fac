//! BM25 sentence retrieval over an immutable inverted index.

mod io;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Sentence, Tokenizer};

pub use io::{INDEX_FORMAT_VERSION, INDEX_MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: 2,
            bm25_k1: 1.2,
            bm25_b: 0.75,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("retrieval k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.bm25_b) || !self.bm25_k1.is_finite() || self.bm25_k1 < 0.0 {
            return Err(Error::Config(format!(
                "invalid BM25 parameters k1={} b={}",
                self.bm25_k1, self.bm25_b
            )));
        }
        Ok(())
    }
}

/// Position of a sentence inside a [`SentenceIndex`]. Sentences are stored in
/// `(doc_id, index)` order, so comparing refs compares provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceRef(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub sentence: SentenceRef,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub sentence: Sentence,
    pub sentence_ref: SentenceRef,
    pub score: f64,
}

/// Lowercased, punctuation-free terms of a sentence.
pub fn sentence_terms(sentence: &Sentence) -> Vec<String> {
    sentence
        .tokens
        .iter()
        .filter(|t| !crate::text::token_is_punct(&t.surface))
        .map(|t| t.surface.to_lowercase())
        .collect()
}

/// Distinct query terms in sorted order. Scores are summed in this order.
pub fn query_terms(tokenizer: &Tokenizer, message: &str) -> Vec<String> {
    let mut terms = crate::text::content_terms(tokenizer, message);
    terms.sort();
    terms.dedup();
    terms
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, positive for every `df <= N`.
pub fn idf(n_sentences: usize, df: usize) -> f64 {
    let n = n_sentences as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Saturated, length-normalized term frequency component of BM25.
pub fn tf_component(tf: f64, length: f64, avg_length: f64, config: &RetrievalConfig) -> f64 {
    let ratio = if avg_length > 0.0 { length / avg_length } else { 1.0 };
    tf * (config.bm25_k1 + 1.0) / (tf + config.bm25_k1 * (1.0 - config.bm25_b + config.bm25_b * ratio))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceIndex {
    sentences: Vec<Sentence>,
    postings: BTreeMap<String, Vec<Posting>>,
    sentence_lengths: Vec<u32>,
    avg_length: f64,
}

impl SentenceIndex {
    pub fn build(sentences: Vec<Sentence>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::IndexBuild("cannot index an empty sentence collection".into()));
        }
        let mut sentences = sentences;
        sentences.sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then(a.index.cmp(&b.index)));
        for pair in sentences.windows(2) {
            if pair[0].doc_id == pair[1].doc_id && pair[0].index == pair[1].index {
                return Err(Error::IndexBuild(format!(
                    "duplicate sentence {} in document {:?}",
                    pair[0].index, pair[0].doc_id
                )));
            }
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut sentence_lengths = Vec::with_capacity(sentences.len());
        for (ordinal, sentence) in sentences.iter().enumerate() {
            let terms = sentence_terms(sentence);
            sentence_lengths.push(terms.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for term in terms {
                *counts.entry(term).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    sentence: SentenceRef(ordinal),
                    tf,
                });
            }
        }
        Ok(Self::from_parts(sentences, postings, sentence_lengths))
    }

    fn from_parts(
        sentences: Vec<Sentence>,
        postings: BTreeMap<String, Vec<Posting>>,
        sentence_lengths: Vec<u32>,
    ) -> Self {
        let total: u64 = sentence_lengths.iter().map(|&l| l as u64).sum();
        let avg_length = total as f64 / sentence_lengths.len() as f64;
        SentenceIndex {
            sentences,
            postings,
            sentence_lengths,
            avg_length,
        }
    }

    pub fn n_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn avg_length(&self) -> f64 {
        self.avg_length
    }

    pub fn sentence(&self, r: SentenceRef) -> &Sentence {
        &self.sentences[r.0]
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn sentence_length(&self, r: SentenceRef) -> u32 {
        self.sentence_lengths[r.0]
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn term_frequency(&self, term: &str, r: SentenceRef) -> u32 {
        let list = self.postings(term);
        list.binary_search_by(|p| p.sentence.cmp(&r))
            .map(|i| list[i].tf)
            .unwrap_or(0)
    }

    /// BM25 of one sentence for an already term-split query. Repeated query
    /// terms count once.
    pub fn bm25_score(&self, query: &[String], r: SentenceRef, config: &RetrievalConfig) -> f64 {
        let mut terms: Vec<&String> = query.iter().collect();
        terms.sort();
        terms.dedup();
        let length = self.sentence_lengths[r.0] as f64;
        let mut score = 0.0;
        for term in terms {
            let tf = self.term_frequency(term, r);
            if tf == 0 {
                continue;
            }
            let idf = idf(self.n_sentences(), self.doc_frequency(term));
            score += idf * tf_component(tf as f64, length, self.avg_length, config);
        }
        score
    }

    /// Top-`k` sentences for a message by BM25, best first; ties go to the
    /// earlier `(doc_id, index)`. Sentences without any query term are never
    /// returned.
    pub fn retrieve_top_k(&self, tokenizer: &Tokenizer, message: &str, config: &RetrievalConfig) -> Vec<ScoredSentence> {
        self.retrieve_terms(&query_terms(tokenizer, message), config)
    }

    pub fn retrieve_terms(&self, terms: &[String], config: &RetrievalConfig) -> Vec<ScoredSentence> {
        let mut terms: Vec<&String> = terms.iter().collect();
        terms.sort();
        terms.dedup();
        let mut scores = vec![0.0f64; self.n_sentences()];
        for term in terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = idf(self.n_sentences(), list.len());
            for p in list {
                let length = self.sentence_lengths[p.sentence.0] as f64;
                scores[p.sentence.0] += idf * tf_component(p.tf as f64, length, self.avg_length, config);
            }
        }
        let mut hits: Vec<(usize, f64)> = scores.into_iter().enumerate().filter(|&(_, s)| s > 0.0).collect();
        hits.sort_by(|a, b| rank_order((a.1, a.0), (b.1, b.0)));
        hits.truncate(config.k);
        hits.into_iter()
            .map(|(i, score)| ScoredSentence {
                sentence: self.sentences[i].clone(),
                sentence_ref: SentenceRef(i),
                score,
            })
            .collect()
    }
}

/// Score descending, then position ascending.
pub fn rank_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

pub fn build_index(sentences: Vec<Sentence>) -> Result<SentenceIndex> {
    SentenceIndex::build(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{preprocess_with, PosTagger, RawDocument};

    fn index_of(doc: &str) -> SentenceIndex {
        let sentences =
            preprocess_with(&RawDocument::new("d", doc), &Tokenizer::default(), &PosTagger::default()).unwrap();
        SentenceIndex::build(sentences).unwrap()
    }

    fn terms(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_sentence_bookkeeping() {
        let index = index_of("A B");
        assert_eq!(index.vocabulary().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(index.avg_length(), 2.0);
        assert_eq!(index.n_sentences(), 1);
    }

    #[test]
    fn counts_sentences_and_repeated_terms() {
        let index = index_of("One fish. Two fish fish. Red.");
        assert_eq!(index.n_sentences(), 3);
        assert_eq!(index.term_frequency("fish", SentenceRef(1)), 2);
        assert_eq!(index.term_frequency("fish", SentenceRef(2)), 0);
        assert_eq!(index.doc_frequency("fish"), 2);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(SentenceIndex::build(vec![]), Err(Error::IndexBuild(_))));
    }

    #[test]
    fn zero_overlap_scores_zero() {
        let index = index_of("alpha beta. gamma delta.");
        assert_eq!(index.bm25_score(&terms(&["omega"]), SentenceRef(0), &RetrievalConfig::default()), 0.0);
        assert!(index.retrieve_terms(&terms(&["omega"]), &RetrievalConfig::default()).is_empty());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn hand_evaluated_score() {
        // N = 2, df = 1, tf = 1, both sentences have the average length.
        let index = index_of("alpha beta. gamma delta.");
        let score = index.bm25_score(&terms(&["alpha"]), SentenceRef(0), &RetrievalConfig::default());
        let expected = std::f64::consts::LN_2 * (1.0 * 2.2) / (1.0 + 1.2);
        assert!((score - expected).abs() < 1e-12, "{score} vs {expected}");
        assert!((score - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn more_occurrences_score_higher() {
        let config = RetrievalConfig::default();
        let single = tf_component(1.0, 4.0, 4.0, &config);
        let double = tf_component(2.0, 4.0, 4.0, &config);
        assert!(double > single);
    }

    #[test]
    fn default_k_is_two_and_results_truncate() {
        let config = RetrievalConfig::default();
        assert_eq!(config.k, 2);
        let index = index_of("The battery lasts ten hours. The screen is bright. The price is low.");
        let hits = index.retrieve_top_k(&Tokenizer::default(), "battery", &config);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].sentence.index, 0);
        let hits = index.retrieve_top_k(&Tokenizer::default(), "the", &config);
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn ties_break_by_position() {
        let index = index_of("red car. red car. red car.");
        let hits = index.retrieve_terms(&terms(&["red"]), &RetrievalConfig { k: 3, ..Default::default() });
        let order: Vec<usize> = hits.iter().map(|h| h.sentence.index).collect();
        assert_eq!(order, [0, 1, 2]);
    }

    #[test]
    fn invalid_config() {
        assert!(RetrievalConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(RetrievalConfig { bm25_b: 1.5, ..Default::default() }.validate().is_err());
    }
}
