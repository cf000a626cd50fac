//! Candidate responses: retrieved sentences plus the simple sentences built
//! from their subject-verb-object triples.

mod extract;

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use extract::{extract_triples, relation_phrases, triple_to_sentence, Span, SvoTriple};

use crate::retrieval::ScoredSentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateKind {
    RetrievedSentence,
    TripleSentence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub kind: CandidateKind,
    pub doc_id: String,
    pub sentence_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple: Option<SvoTriple>,
}

/// Ordered, case-insensitively deduplicated candidate list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Candidate> {
        self.candidates.iter()
    }

    pub fn as_slice(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn texts(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.text.clone()).collect()
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for c in &self.candidates {
            serde_json::to_writer(&mut out, c)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a CandidateSet {
    type Item = &'a Candidate;
    type IntoIter = std::slice::Iter<'a, Candidate>;

    fn into_iter(self) -> Self::IntoIter {
        self.candidates.iter()
    }
}

/// Builds the candidate set for a retrieval result: every retrieved sentence
/// verbatim, then the triple sentences, skipping any text already present.
pub fn generate_candidates(retrieved: &[ScoredSentence]) -> CandidateSet {
    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for hit in retrieved {
        let s = &hit.sentence;
        if seen.insert(s.text.to_lowercase()) {
            candidates.push(Candidate {
                text: s.text.clone(),
                kind: CandidateKind::RetrievedSentence,
                doc_id: s.doc_id.clone(),
                sentence_index: s.index,
                triple: None,
            });
        }
    }
    for hit in retrieved {
        for triple in extract_triples(&hit.sentence) {
            let text = triple_to_sentence(&triple);
            if seen.insert(text.to_lowercase()) {
                candidates.push(Candidate {
                    text,
                    kind: CandidateKind::TripleSentence,
                    doc_id: triple.doc_id.clone(),
                    sentence_index: triple.sentence_index,
                    triple: Some(triple),
                });
            }
        }
    }
    CandidateSet { candidates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::SentenceRef;
    use crate::text::{preprocess_document, PosTagger, RawDocument};

    fn hits(text: &str) -> Vec<ScoredSentence> {
        preprocess_document(&RawDocument::new("d", text), &PosTagger::default())
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, sentence)| ScoredSentence {
                sentence,
                sentence_ref: SentenceRef(i),
                score: 1.0,
            })
            .collect()
    }

    #[test]
    fn empty_retrieval_gives_empty_set() {
        assert!(generate_candidates(&[]).is_empty());
    }

    #[test]
    fn union_of_sentences_and_triples() {
        let set = generate_candidates(&hits(
            "The laptop has a 4K screen and it supports fast charging. The battery of the tablet lasts 10 hours.",
        ));
        assert_eq!(
            set.texts(),
            [
                "The laptop has a 4K screen and the laptop supports fast charging.",
                "The battery of the tablet lasts 10 hours.",
                "The laptop has a 4K screen.",
                "The laptop supports fast charging.",
                "The tablet lasts 10 hours.",
            ]
        );
        assert_eq!(set.iter().filter(|c| c.kind == CandidateKind::TripleSentence).count(), 3);
    }

    #[test]
    fn duplicate_triple_sentence_keeps_the_retrieved_one() {
        let set = generate_candidates(&hits("Lingke answers questions."));
        assert_eq!(set.len(), 1);
        assert_eq!(set.as_slice()[0].kind, CandidateKind::RetrievedSentence);
        assert!(set.as_slice()[0].triple.is_none());
    }

    #[test]
    fn jsonl_lines_carry_kind_and_provenance() {
        let set = generate_candidates(&hits("The new tablet from Asus comes with a stylus."));
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        let lines: Vec<serde_json::Value> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["kind"], "retrieved-sentence");
        assert_eq!(lines[1]["kind"], "triple-sentence");
        assert_eq!(lines[1]["doc_id"], "d");
        assert_eq!(lines[1]["sentence_index"], 0);
        assert_eq!(lines[1]["triple"]["verb_phrase"]["text"], "comes with");
    }
}
