//! Seeded synthetic product-QA corpus. Each dialogue asks about one
//! product, then ends with an elliptical follow-up ("And the price?") whose
//! answer depends on the product named in earlier turns. Distractors include
//! the same attribute for another product, other attributes of the same
//! product and, in half the contexts, the verbatim earlier answer.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{extract_triples, triple_to_sentence};
use crate::error::{Error, Result};
use crate::matcher::{write_examples, DialogueExample};
use crate::text::{normalized_terms, RawDocument, TextPipeline};

/// A ten-sentence product description shipped for demos and tests.
pub const SAMPLE_DOCUMENT: &str = include_str!("../data/sample_product.txt");
/// The product [`SAMPLE_DOCUMENT`] describes.
pub const SAMPLE_PRODUCT: &str = "ZenBook";

pub const PRODUCTS: [&str; 12] = [
    "ZenBook", "VivoBook", "Galaxy", "Pixel", "Xperia", "Surface", "ThinkPad", "Inspiron", "Spectre", "Aspire",
    "MateBook", "Yoga",
];

/// One product property with its question and answer phrasings. `{p}` is the
/// product name, `{v}` the value.
#[derive(Debug, Clone, Copy)]
pub struct Attribute {
    pub name: &'static str,
    pub answer: &'static str,
    pub values: &'static [&'static str],
    pub questions: &'static [&'static str],
    pub follow_ups: &'static [&'static str],
    /// Answer word that marks a document sentence as stating this attribute.
    pub marker: &'static str,
}

pub const ATTRIBUTES: [Attribute; 8] = [
    Attribute {
        name: "weight",
        answer: "The {p} weighs {v} kilograms.",
        values: &["1.1", "1.3", "1.5", "1.8", "2.1", "2.4"],
        questions: &[
            "How heavy is the {p}?",
            "What does the {p} weigh?",
            "How many kilograms does the {p} weigh?",
            "Is the {p} easy to carry?",
        ],
        follow_ups: &["And how heavy is it?", "What about the weight?", "Is it easy to carry?"],
        marker: "kilograms",
    },
    Attribute {
        name: "battery",
        answer: "The battery of the {p} lasts {v} hours.",
        values: &["6", "8", "10", "11", "14", "18"],
        questions: &[
            "How long does the battery of the {p} last?",
            "How many hours can the {p} run unplugged?",
            "Can the {p} last a full day without charging?",
        ],
        follow_ups: &["And the battery?", "How long does it last unplugged?", "What about battery life?"],
        marker: "hours",
    },
    Attribute {
        name: "price",
        answer: "The {p} costs {v} dollars.",
        values: &["499", "649", "799", "899", "1199", "1499"],
        questions: &[
            "How much is the {p}?",
            "What is the price of the {p}?",
            "How many dollars does the {p} cost?",
        ],
        follow_ups: &["And the price?", "How much is it?", "Is it expensive?"],
        marker: "dollars",
    },
    Attribute {
        name: "screen",
        answer: "The {p} has a {v} inch display.",
        values: &["11", "13", "14", "15", "16", "17"],
        questions: &["How big is the screen of the {p}?", "What size is the {p} display?"],
        follow_ups: &["And the screen size?", "How big is its screen?", "What about the display?"],
        marker: "inch",
    },
    Attribute {
        name: "storage",
        answer: "The {p} stores {v} gigabytes of data.",
        values: &["128", "256", "512", "1024"],
        questions: &["How much storage does the {p} have?", "How much data fits on the {p}?"],
        follow_ups: &["What about storage?", "How much space does it have?"],
        marker: "gigabytes",
    },
    Attribute {
        name: "camera",
        answer: "The camera of the {p} takes {v} megapixel photos.",
        values: &["2", "5", "8", "12", "48"],
        questions: &["How good is the camera of the {p}?", "Does the {p} take sharp photos?"],
        follow_ups: &["And the camera?", "Are its pictures sharp?"],
        marker: "megapixel",
    },
    Attribute {
        name: "warranty",
        answer: "The {p} comes with a {v} year warranty.",
        values: &["1", "2", "3"],
        questions: &["What warranty does the {p} have?", "How long is the {p} guaranteed?"],
        follow_ups: &["And the warranty?", "Is it guaranteed for long?"],
        marker: "warranty",
    },
    Attribute {
        name: "color",
        answer: "The {p} is sold in {v}.",
        values: &["silver", "black", "white", "blue", "gold", "green"],
        questions: &["Which colors does the {p} come in?", "What color is the {p}?"],
        follow_ups: &["What colors can I get?", "And the colors?"],
        marker: "sold",
    },
];

const GREETINGS: [&str; 4] = ["Hi there.", "Hello!", "Good morning.", "Hey, I have a question."];
const WELCOMES: [&str; 3] = [
    "Hello, how can I help you?",
    "Sure, what would you like to know?",
    "Hi! Ask me anything about our products.",
];
const CHATTER: [&str; 3] = ["You are welcome.", "Glad I could help.", "Let me check that for you."];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Training contexts; each yields one positive and one negative example.
    pub train_contexts: usize,
    /// Contexts in each of the validation and test files.
    pub eval_contexts: usize,
    /// Candidates per evaluation context.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train_contexts: 5000,
            eval_contexts: 500,
            candidates: 10,
            seed: 7,
        }
    }
}

/// Attribute values of every product, fixed for one corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub values: BTreeMap<String, BTreeMap<String, String>>,
}

impl Catalog {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let values = PRODUCTS
            .iter()
            .map(|p| {
                let attrs = ATTRIBUTES
                    .iter()
                    .map(|a| (a.name.to_string(), a.values.choose(rng).unwrap().to_string()))
                    .collect();
                (p.to_string(), attrs)
            })
            .collect();
        Catalog { values }
    }

    pub fn answer(&self, product: usize, attribute: usize) -> String {
        let attr = &ATTRIBUTES[attribute];
        let value = &self.values[PRODUCTS[product]][attr.name];
        attr.answer.replace("{p}", PRODUCTS[product]).replace("{v}", value)
    }

    /// A product introduction: an opening line, then one sentence per
    /// attribute.
    pub fn document(&self, product: usize) -> String {
        let name = PRODUCTS[product];
        let mut out = format!("The {name} is a laptop for work and travel.");
        for a in 0..ATTRIBUTES.len() {
            out.push(' ');
            out.push_str(&self.answer(product, a));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub catalog: Catalog,
    pub train: Vec<DialogueExample>,
    pub valid: Vec<DialogueExample>,
    pub test: Vec<DialogueExample>,
}

struct Dialogue {
    context: Vec<String>,
    positive: String,
    distractors: Vec<String>,
}

fn question(template: &str, product: usize) -> String {
    template.replace("{p}", PRODUCTS[product])
}

fn other_than(rng: &mut ChaCha8Rng, n: usize, exclude: &[usize]) -> usize {
    loop {
        let x = rng.gen_range(0..n);
        if !exclude.contains(&x) {
            return x;
        }
    }
}

fn dialogue(catalog: &Catalog, rng: &mut ChaCha8Rng, n_distractors: usize) -> Dialogue {
    let n_attr = ATTRIBUTES.len();
    let product = rng.gen_range(0..PRODUCTS.len());
    let first = rng.gen_range(0..n_attr);
    let target = other_than(rng, n_attr, &[first]);
    let mut context = Vec::new();
    if rng.gen_bool(0.5) {
        context.push(GREETINGS.choose(rng).unwrap().to_string());
        context.push(WELCOMES.choose(rng).unwrap().to_string());
    }
    let earlier = rng.gen_bool(0.5).then(|| other_than(rng, PRODUCTS.len(), &[product]));
    if let Some(p0) = earlier {
        let a0 = rng.gen_range(0..n_attr);
        context.push(question(ATTRIBUTES[a0].questions.choose(rng).unwrap(), p0));
        context.push(catalog.answer(p0, a0));
    }
    context.push(question(ATTRIBUTES[first].questions.choose(rng).unwrap(), product));
    let trap = catalog.answer(product, first);
    context.push(trap.clone());
    context.push(ATTRIBUTES[target].follow_ups.choose(rng).unwrap().to_string());
    let positive = catalog.answer(product, target);

    let mut distractors = Vec::new();
    if rng.gen_bool(0.5) {
        distractors.push(trap);
    }
    if let Some(p0) = earlier {
        distractors.push(catalog.answer(p0, target));
    }
    let mut same_product: Vec<String> = (0..n_attr)
        .filter(|&a| a != first && a != target)
        .map(|a| catalog.answer(product, a))
        .collect();
    let mut same_attribute: Vec<String> = (0..PRODUCTS.len())
        .filter(|&p| p != product && Some(p) != earlier)
        .map(|p| catalog.answer(p, target))
        .collect();
    same_product.shuffle(rng);
    same_attribute.shuffle(rng);
    let chatter = CHATTER.iter().chain(&WELCOMES).map(|s| s.to_string());
    let mut rest: Vec<String> = same_product.split_off(same_product.len().min(3));
    rest.extend(same_attribute.split_off(same_attribute.len().min(3)));
    rest.extend(chatter.clone().skip(1));
    rest.shuffle(rng);
    distractors.extend(same_product);
    distractors.extend(same_attribute);
    distractors.push(chatter.clone().nth(rng.gen_range(0..CHATTER.len() + WELCOMES.len())).unwrap());
    distractors.extend(rest);
    let mut seen = std::collections::HashSet::new();
    seen.insert(positive.clone());
    distractors.retain(|d| seen.insert(d.clone()));
    distractors.truncate(n_distractors);
    Dialogue {
        context,
        positive,
        distractors,
    }
}

/// Builds the whole corpus from `config.seed`. The same config always gives
/// the same corpus.
pub fn generate(config: SynthConfig) -> Result<SynthCorpus> {
    if config.candidates < 2 || config.candidates > 20 {
        return Err(Error::Config(format!("candidates must be in 2..=20, got {}", config.candidates)));
    }
    if config.train_contexts == 0 || config.eval_contexts == 0 {
        return Err(Error::Config("context counts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let catalog = Catalog::random(&mut rng);
    let mut train = Vec::with_capacity(config.train_contexts * 2);
    for _ in 0..config.train_contexts {
        let d = dialogue(&catalog, &mut rng, config.candidates - 1);
        let negative = d.distractors.choose(&mut rng).unwrap().clone();
        let pair = [(d.positive, 1), (negative, 0)];
        let first = rng.gen_range(0..2);
        for i in [first, 1 - first] {
            train.push(DialogueExample {
                context: d.context.clone(),
                response: pair[i].0.clone(),
                label: pair[i].1,
            });
        }
    }
    let eval_split = |rng: &mut ChaCha8Rng| {
        let mut out = Vec::with_capacity(config.eval_contexts * config.candidates);
        for _ in 0..config.eval_contexts {
            let d = dialogue(&catalog, rng, config.candidates - 1);
            let mut group: Vec<(String, u8)> = std::iter::once((d.positive, 1))
                .chain(d.distractors.into_iter().map(|r| (r, 0)))
                .collect();
            group.shuffle(rng);
            out.extend(group.into_iter().map(|(response, label)| DialogueExample {
                context: d.context.clone(),
                response,
                label,
            }));
        }
        out
    };
    let valid = eval_split(&mut rng);
    let test = eval_split(&mut rng);
    Ok(SynthCorpus {
        config,
        catalog,
        train,
        valid,
        test,
    })
}

/// Question-answer examples for a document: every sentence that states an
/// attribute (found by its marker word) becomes the positive response to
/// each question about that attribute, with up to `negatives` other
/// sentences as negatives. Each question appears in three contexts: alone,
/// after a greeting exchange, and after an exchange about another attribute
/// of the same document.
pub fn document_examples(sentences: &[String], product: &str, negatives: usize, seed: u64) -> Vec<DialogueExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let marked: Vec<(usize, &Attribute)> = sentences
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let terms = normalized_terms(s);
            ATTRIBUTES
                .iter()
                .find(|a| terms.iter().any(|t| t == a.marker))
                .map(|a| (i, a))
        })
        .collect();
    let mut out = Vec::new();
    for &(i, attr) in &marked {
        let sentence = &sentences[i];
        let others: Vec<&String> = sentences
            .iter()
            .enumerate()
            .filter(|&(j, s)| j != i && s.to_lowercase() != sentence.to_lowercase())
            .map(|(_, s)| s)
            .collect();
        let earlier: Vec<(usize, &Attribute)> = marked.iter().copied().filter(|(_, a)| a.name != attr.name).collect();
        for q in attr.questions {
            let q = q.replace("{p}", product);
            let mut contexts = vec![
                vec![q.clone()],
                vec![
                    GREETINGS.choose(&mut rng).expect("non-empty").to_string(),
                    WELCOMES.choose(&mut rng).expect("non-empty").to_string(),
                    q.clone(),
                ],
            ];
            if let Some(&(j, other)) = earlier.choose(&mut rng) {
                let other_q = other.questions.choose(&mut rng).expect("non-empty").replace("{p}", product);
                contexts.push(vec![other_q, sentences[j].clone(), q.clone()]);
            }
            for context in contexts {
                out.push(DialogueExample {
                    context: context.clone(),
                    response: sentence.clone(),
                    label: 1,
                });
                for neg in others.choose_multiple(&mut rng, negatives.min(others.len())) {
                    out.push(DialogueExample {
                        context: context.clone(),
                        response: (*neg).clone(),
                        label: 0,
                    });
                }
            }
        }
    }
    out
}

/// Training examples for a product document: its pronoun-resolved
/// sentences and their triple sentences, passed to [`document_examples`].
pub fn document_training_examples(text: &str, product: &str, negatives: usize, seed: u64) -> Result<Vec<DialogueExample>> {
    let sentences = TextPipeline::default().preprocess(&RawDocument::new(product, text))?;
    let mut texts: Vec<String> = sentences.iter().map(|s| s.text.clone()).collect();
    texts.extend(sentences.iter().flat_map(extract_triples).map(|t| triple_to_sentence(&t)));
    Ok(document_examples(&texts, product, negatives, seed))
}

/// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl`, `catalog.json` and one
/// `documents/<product>.txt` per product.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    let docs = dir.join("documents");
    std::fs::create_dir_all(&docs).map_err(|e| Error::io(&docs, e))?;
    for (name, examples) in [("train", &corpus.train), ("valid", &corpus.valid), ("test", &corpus.test)] {
        let path = dir.join(format!("{name}.jsonl"));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = std::io::BufWriter::new(file);
        write_examples(&mut out, examples).map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("catalog.json");
    let json = serde_json::to_string_pretty(&corpus.catalog)? + "\n";
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    for (i, p) in PRODUCTS.iter().enumerate() {
        let path = docs.join(format!("{}.txt", p.to_lowercase()));
        std::fs::write(&path, corpus.catalog.document(i) + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::{evaluate_with, group_candidates, TfIdfModel};

    fn small() -> SynthConfig {
        SynthConfig {
            train_contexts: 200,
            eval_contexts: 100,
            candidates: 10,
            seed: 3,
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(generate(small()).unwrap(), generate(small()).unwrap());
        let other = generate(SynthConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(other.train, generate(small()).unwrap().train);
    }

    #[test]
    fn groups_have_one_positive_and_distinct_candidates() {
        let c = generate(small()).unwrap();
        assert_eq!(c.train.len(), 400);
        assert_eq!(c.train.iter().filter(|e| e.label == 1).count(), 200);
        for group in group_candidates(&c.test, 10).unwrap() {
            assert_eq!(group.iter().filter(|e| e.label == 1).count(), 1);
            let mut texts: Vec<_> = group.iter().map(|e| e.response.to_lowercase()).collect();
            texts.sort();
            texts.dedup();
            assert_eq!(texts.len(), 10);
        }
    }

    #[test]
    fn final_turn_is_a_follow_up_without_the_product() {
        let c = generate(small()).unwrap();
        for ex in &c.valid {
            let last = ex.context.last().unwrap();
            assert!(PRODUCTS.iter().all(|p| !last.contains(p)), "{last}");
        }
    }

    #[test]
    fn lexical_overlap_is_a_weak_signal() {
        let c = generate(small()).unwrap();
        let tfidf = TfIdfModel::fit(
            c.train
                .iter()
                .flat_map(|e| e.context.iter().map(String::as_str).chain([e.response.as_str()])),
        );
        let report = evaluate_with(&c.test, 10, &[1], |ctx, rs| Ok(rs.iter().map(|r| tfidf.score(ctx, r)).collect()))
            .unwrap();
        assert!(report.recall(1).unwrap() < 0.5, "{report:?}");
    }

    #[test]
    fn document_examples_pair_questions_with_marked_sentences() {
        let c = generate(small()).unwrap();
        let sentences: Vec<String> = c
            .catalog
            .document(0)
            .split_inclusive(". ")
            .map(|s| s.trim().to_string())
            .collect();
        let ex = document_examples(&sentences, PRODUCTS[0], 2, 1);
        let positives: Vec<_> = ex.iter().filter(|e| e.label == 1).collect();
        let n_questions: usize = ATTRIBUTES.iter().map(|a| a.questions.len()).sum();
        assert_eq!(positives.len(), 3 * n_questions);
        assert_eq!(ex.len(), 3 * n_questions * 3);
        assert!(positives
            .iter()
            .any(|e| e.response.contains("kilograms") && e.context.len() == 1 && e.context[0].contains("heavy")));
        for e in &positives {
            let last = e.context.last().unwrap();
            let attr = ATTRIBUTES.iter().find(|a| e.response.contains(a.marker)).unwrap();
            assert!(attr.questions.iter().any(|q| q.replace("{p}", PRODUCTS[0]) == *last));
        }
        assert_eq!(ex, document_examples(&sentences, PRODUCTS[0], 2, 1));
    }
}
