//! Verb-phrase-pattern triple extraction.
//!
//! A relation phrase is the longest match of `V | V P | V W* P` where
//!
//! * `V` = modal* (adverb* verb)+ particle? adverb?
//! * `W` = noun, proper noun, adjective, adverb, pronoun, determiner or number
//! * `P` = preposition, particle or infinitive marker
//!
//! The subject is the nearest noun phrase ending before the relation (relative
//! pronouns never qualify) and the object the nearest noun phrase starting
//! after it with no verb in between. Relations missing either argument produce nothing.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::text::{noun_phrases, Sentence, Tag, Token};

const RELATIVE_PRONOUNS: &[&str] = &["which", "who", "whom", "whose", "that", "what"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Span {
    fn of(sentence: &Sentence, range: Range<usize>) -> Self {
        Span {
            text: sentence.surface(range.clone()).to_string(),
            start: range.start,
            end: range.end,
        }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvoTriple {
    pub subject: Span,
    pub verb_phrase: Span,
    pub object: Span,
    pub doc_id: String,
    pub sentence_index: usize,
}

fn is_word(tag: Tag) -> bool {
    matches!(
        tag,
        Tag::Noun | Tag::ProperNoun | Tag::Adjective | Tag::Adverb | Tag::Pronoun | Tag::Determiner | Tag::Number
    )
}

fn is_preposition_like(tag: Tag) -> bool {
    matches!(tag, Tag::Preposition | Tag::Particle | Tag::InfinitiveMarker)
}

/// End (exclusive) of the `V` part starting at `i`, if one starts there.
fn verb_group_end(tokens: &[Token], i: usize) -> Option<usize> {
    let tag = |j: usize| tokens.get(j).map(|t| t.pos);
    let mut j = i;
    match tag(j)? {
        Tag::Modal => {
            while tag(j) == Some(Tag::Modal) {
                j += 1;
            }
        }
        Tag::Verb => {}
        _ => return None,
    }
    let mut saw_verb = false;
    loop {
        let mut k = j;
        while tag(k) == Some(Tag::Adverb) {
            k += 1;
        }
        if tag(k) == Some(Tag::Verb) {
            j = k + 1;
            saw_verb = true;
        } else {
            break;
        }
    }
    if !saw_verb {
        return None;
    }
    if tag(j) == Some(Tag::Particle) {
        j += 1;
    }
    if tag(j) == Some(Tag::Adverb) {
        j += 1;
    }
    Some(j)
}

/// Longest relation phrase starting at `i`.
fn relation_at(tokens: &[Token], i: usize) -> Option<Range<usize>> {
    let v_end = verb_group_end(tokens, i)?;
    let mut k = v_end;
    while k < tokens.len() && is_word(tokens[k].pos) {
        k += 1;
    }
    if k < tokens.len() && is_preposition_like(tokens[k].pos) {
        Some(i..k + 1)
    } else {
        Some(i..v_end)
    }
}

/// Noun phrases plus standalone non-relative pronouns, in token order.
fn argument_phrases(tokens: &[Token]) -> Vec<Range<usize>> {
    let mut out = noun_phrases(tokens);
    for (i, t) in tokens.iter().enumerate() {
        if t.pos == Tag::Pronoun && !RELATIVE_PRONOUNS.contains(&t.surface.to_lowercase().as_str()) {
            out.push(i..i + 1);
        }
    }
    out.sort_by_key(|r| r.start);
    out
}

pub fn relation_phrases(sentence: &Sentence) -> Vec<Range<usize>> {
    let tokens = &sentence.tokens;
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match relation_at(tokens, i) {
            Some(r) => {
                i = r.end;
                out.push(r);
            }
            None => i += 1,
        }
    }
    out
}

pub fn extract_triples(sentence: &Sentence) -> Vec<SvoTriple> {
    let args = argument_phrases(&sentence.tokens);
    relation_phrases(sentence)
        .into_iter()
        .filter_map(|rel| {
            let subject = args.iter().filter(|a| a.end <= rel.start).max_by_key(|a| a.end)?;
            let object = args
                .iter()
                .filter(|a| a.start >= rel.end)
                .min_by_key(|a| a.start)
                .filter(|a| !sentence.tokens[rel.end..a.start].iter().any(|t| matches!(t.pos, Tag::Verb | Tag::Modal)))?;
            Some(SvoTriple {
                subject: Span::of(sentence, subject.clone()),
                verb_phrase: Span::of(sentence, rel),
                object: Span::of(sentence, object.clone()),
                doc_id: sentence.doc_id.clone(),
                sentence_index: sentence.index,
            })
        })
        .collect()
}

/// "subject verb object." with the first letter capitalized.
pub fn triple_to_sentence(triple: &SvoTriple) -> String {
    let joined = format!(
        "{} {} {}",
        triple.subject.text.trim(),
        triple.verb_phrase.text.trim(),
        triple.object.text.trim()
    );
    let mut text = crate::text::capitalize(&joined);
    if !text.ends_with(['.', '!', '?']) {
        text.push('.');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{preprocess_document, PosTagger, RawDocument};

    fn sentences(text: &str) -> Vec<Sentence> {
        preprocess_document(&RawDocument::new("d", text), &PosTagger::default()).unwrap()
    }

    fn triples(text: &str) -> Vec<(String, String, String)> {
        sentences(text)
            .iter()
            .flat_map(extract_triples)
            .map(|t| (t.subject.text, t.verb_phrase.text, t.object.text))
            .collect()
    }

    fn t(s: &str, v: &str, o: &str) -> (String, String, String) {
        (s.into(), v.into(), o.into())
    }

    #[test]
    fn no_verb_no_triple() {
        assert!(triples("Hello!").is_empty());
    }

    #[test]
    fn simple_svo() {
        assert_eq!(triples("Lingke answers questions."), [t("Lingke", "answers", "questions")]);
    }

    #[test]
    fn one_triple_per_clause() {
        assert_eq!(
            triples("The laptop has a 4K screen and it supports fast charging."),
            [
                t("The laptop", "has", "a 4K screen"),
                t("the laptop", "supports", "fast charging")
            ]
        );
    }

    #[test]
    fn longest_relation_wins() {
        assert_eq!(
            triples("The battery lasts up to 10 hours."),
            [t("The battery", "lasts up to", "10 hours")]
        );
        assert_eq!(
            triples("The tablet comes with a stylus."),
            [t("The tablet", "comes with", "a stylus")]
        );
        assert_eq!(
            triples("The phone can also be used for video calls."),
            [t("The phone", "can also be used for", "video calls")]
        );
    }

    #[test]
    fn relative_pronoun_is_not_a_subject() {
        assert_eq!(
            triples("The laptop, which weighs 1.8 kg, has a fan."),
            [t("The laptop", "weighs", "1.8 kg"), t("1.8 kg", "has", "a fan")]
        );
    }

    #[test]
    fn spans_are_ordered_and_inside_the_sentence() {
        for s in sentences("The ZenBook Pro comes with a stylus and it runs Windows for hours.") {
            for tr in extract_triples(&s) {
                assert!(tr.subject.end <= tr.verb_phrase.start);
                assert!(tr.verb_phrase.end <= tr.object.start);
                assert!(tr.object.end <= s.tokens.len());
            }
        }
    }

    #[test]
    fn concatenation_rule() {
        let tr = &sentences("Lingke answers questions.").iter().flat_map(extract_triples).collect::<Vec<_>>()[0];
        assert_eq!(triple_to_sentence(tr), "Lingke answers questions.");

        let mut lower = tr.clone();
        lower.subject.text = "the ZenBook".into();
        assert_eq!(triple_to_sentence(&lower), "The ZenBook answers questions.");

        let mut dotted = tr.clone();
        dotted.object.text = "Inc.".into();
        assert_eq!(triple_to_sentence(&dotted), "Lingke answers Inc.");
    }
}
