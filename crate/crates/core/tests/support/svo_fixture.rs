//! Triple extraction scored against the hand-annotated fixture corpus.

use std::collections::HashSet;

use docbot::candidates::extract_triples;
use docbot::text::{preprocess_document, PosTagger, RawDocument};
use serde::Deserialize;

#[derive(Deserialize)]
struct GoldLine {
    sentence: String,
    triples: Vec<[String; 3]>,
}

pub struct FixtureScore {
    pub precision: f64,
    pub recall: f64,
    pub misses: Vec<String>,
}

pub fn score_fixture() -> FixtureScore {
    let tagger = PosTagger::default();
    let mut predicted_total = 0usize;
    let mut gold_total = 0usize;
    let mut correct = 0usize;
    let mut misses = Vec::new();
    let text = include_str!("../fixtures/svo_gold.jsonl");
    for (n, line) in text.lines().enumerate() {
        let gold: GoldLine = serde_json::from_str(line).unwrap();
        let doc = RawDocument::new(format!("fixture-{n}"), gold.sentence.clone());
        let predicted: HashSet<[String; 3]> = preprocess_document(&doc, &tagger)
            .unwrap()
            .iter()
            .flat_map(extract_triples)
            .map(|t| [t.subject.text, t.verb_phrase.text, t.object.text])
            .collect();
        let expected: HashSet<[String; 3]> = gold.triples.into_iter().collect();
        predicted_total += predicted.len();
        gold_total += expected.len();
        correct += predicted.intersection(&expected).count();
        if predicted != expected {
            misses.push(format!("{}: got {:?}, want {:?}", gold.sentence, predicted, expected));
        }
    }
    FixtureScore {
        precision: correct as f64 / predicted_total.max(1) as f64,
        recall: correct as f64 / gold_total.max(1) as f64,
        misses,
    }
}
