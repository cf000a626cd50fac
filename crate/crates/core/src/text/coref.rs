//! Nearest-antecedent pronoun substitution.
//!
//! Third-person pronouns are replaced by the closest preceding noun phrase
//! that agrees in number, looking back through the current sentence and the
//! two sentences before it. Pronouns are processed left to right and each
//! substitution is visible to the pronouns after it, which makes the
//! resolver idempotent.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::chunk::noun_phrases;
use super::sentence::Sentence;
use super::tagger::PosTagger;
use super::token::{Tag, Token, Tokenizer};

/// How many sentences before the current one are searched for antecedents.
pub const ANTECEDENT_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrammaticalNumber {
    Singular,
    Plural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MentionKind {
    Pronoun,
    NounPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub sentence_index: usize,
    pub token_range: Range<usize>,
    pub head_number: GrammaticalNumber,
    pub kind: MentionKind,
}

struct PronounInfo {
    number: GrammaticalNumber,
    possessive: bool,
}

fn pronoun_info(word: &str) -> Option<PronounInfo> {
    use GrammaticalNumber::*;
    let (number, possessive) = match word {
        "it" | "he" | "him" | "she" | "her" | "this" | "that" => (Singular, false),
        "its" | "his" => (Singular, true),
        "they" | "them" => (Plural, false),
        "their" => (Plural, true),
        _ => return None,
    };
    Some(PronounInfo { number, possessive })
}

/// Returns the pronoun mention at `i`, if the token is a resolvable
/// third-person pronoun. `this`/`that` only count when they stand alone as a
/// subject or object rather than introducing a noun or a clause.
fn pronoun_mention(sentence: &Sentence, i: usize) -> Option<(Mention, bool)> {
    let token = &sentence.tokens[i];
    let word = token.surface.to_lowercase();
    let info = pronoun_info(&word)?;
    if word == "this" || word == "that" {
        let prev_ok = i == 0
            || matches!(
                sentence.tokens[i - 1].pos,
                Tag::Punctuation | Tag::Preposition | Tag::Other
            );
        let next_ok = sentence
            .tokens
            .get(i + 1)
            .is_none_or(|t| matches!(t.pos, Tag::Verb | Tag::Modal | Tag::Punctuation));
        if !(prev_ok && next_ok) {
            return None;
        }
    } else if token.pos != Tag::Pronoun {
        return None;
    }
    Some((
        Mention {
            sentence_index: sentence.index,
            token_range: i..i + 1,
            head_number: info.number,
            kind: MentionKind::Pronoun,
        },
        info.possessive,
    ))
}

const SINGULAR_S: &[&str] = &["lens", "series", "news", "species", "means", "gps", "ios", "analysis"];

fn phrase_number(tokens: &[Token]) -> GrammaticalNumber {
    let head = &tokens[tokens.len() - 1];
    let lower = head.surface.to_lowercase();
    let plural = head.pos == Tag::Noun
        && !SINGULAR_S.contains(&lower.as_str())
        && (lower == "people"
            || (lower.len() > 3
                && lower.ends_with('s')
                && !["ss", "us", "is"].iter().any(|s| lower.ends_with(s))));
    if plural {
        GrammaticalNumber::Plural
    } else {
        GrammaticalNumber::Singular
    }
}

/// Noun-phrase mentions usable as antecedents. Quantities such as "1.8 kg"
/// are skipped.
pub fn antecedent_mentions(sentence: &Sentence) -> Vec<Mention> {
    noun_phrases(&sentence.tokens)
        .into_iter()
        .filter(|r| {
            sentence.tokens[r.clone()]
                .iter()
                .find(|t| t.pos != Tag::Determiner)
                .is_some_and(|t| t.pos != Tag::Number)
        })
        .map(|r| Mention {
            sentence_index: sentence.index,
            head_number: phrase_number(&sentence.tokens[r.clone()]),
            token_range: r,
            kind: MentionKind::NounPhrase,
        })
        .collect()
}

fn replacement_text(antecedent: &Sentence, mention: &Mention, sentence_initial: bool, possessive: bool) -> String {
    let mut text = antecedent.surface(mention.token_range.clone()).to_string();
    let first = &antecedent.tokens[mention.token_range.start];
    if sentence_initial {
        text = capitalize(&text);
    } else if first.pos == Tag::Determiner {
        text = lowercase_first(&text);
    }
    if possessive {
        if mention.head_number == GrammaticalNumber::Plural && text.ends_with('s') {
            text.push('\'');
        } else {
            text.push_str("'s");
        }
    }
    text
}

pub(crate) fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Rule-based pronoun resolver.
#[derive(Debug, Clone, Default)]
pub struct CorefResolver {
    tokenizer: Tokenizer,
    tagger: PosTagger,
}

impl CorefResolver {
    pub fn new(tokenizer: Tokenizer, tagger: PosTagger) -> Self {
        CorefResolver { tokenizer, tagger }
    }

    fn retokenize(&self, sentence: &mut Sentence) {
        sentence.tokens = self.tagger.tag(&self.tokenizer.tokenize(&sentence.text));
    }

    pub fn resolve(&self, sentences: &[Sentence]) -> Vec<Sentence> {
        let mut out: Vec<Sentence> = Vec::with_capacity(sentences.len());
        for sentence in sentences {
            let mut current = sentence.clone();
            let mut i = 0;
            while i < current.tokens.len() {
                let Some((pronoun, possessive)) = pronoun_mention(&current, i) else {
                    i += 1;
                    continue;
                };
                let found = self.find_antecedent(&current, i, pronoun.head_number, &out);
                let Some((source, mention)) = found else {
                    i += 1;
                    continue;
                };
                let replacement = replacement_text(source, &mention, i == 0, possessive);
                let span = current.tokens[i].span.clone();
                let resume_at = span.start + replacement.len();
                current.text.replace_range(span, &replacement);
                self.retokenize(&mut current);
                i = current
                    .tokens
                    .iter()
                    .position(|t| t.span.start >= resume_at)
                    .unwrap_or(current.tokens.len());
            }
            out.push(current);
        }
        out
    }

    /// Nearest agreeing noun phrase before token `at`: first within the
    /// current sentence, then in the preceding sentences, closest first.
    fn find_antecedent<'a>(
        &self,
        current: &'a Sentence,
        at: usize,
        number: GrammaticalNumber,
        previous: &'a [Sentence],
    ) -> Option<(&'a Sentence, Mention)> {
        let agrees = |m: &Mention| m.head_number == number;
        if let Some(m) = antecedent_mentions(current)
            .into_iter()
            .filter(|m| m.token_range.end <= at)
            .rfind(agrees)
        {
            return Some((current, m));
        }
        previous
            .iter()
            .rev()
            .take(ANTECEDENT_WINDOW)
            .find_map(|s| antecedent_mentions(s).into_iter().rfind(agrees).map(|m| (s, m)))
    }
}

/// Resolves with the shipped tokenizer and tagger.
pub fn resolve_coreference(sentences: &[Sentence]) -> Vec<Sentence> {
    CorefResolver::default().resolve(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{preprocess_with, RawDocument};

    fn texts(doc: &str) -> Vec<String> {
        let resolver = CorefResolver::default();
        let split = crate::text::split_only(&RawDocument::new("d", doc), &Tokenizer::default(), &PosTagger::default());
        resolver.resolve(&split).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn nearest_antecedent_in_previous_sentence() {
        assert_eq!(
            texts("The ZenBook Pro is light. It weighs 1.8 kg."),
            ["The ZenBook Pro is light.", "The ZenBook Pro weighs 1.8 kg."]
        );
    }

    #[test]
    fn mid_sentence_pronoun_lowercases_the_determiner() {
        assert_eq!(
            texts("The laptop has a 4K screen and it supports fast charging."),
            ["The laptop has a 4K screen and the laptop supports fast charging."]
        );
    }

    #[test]
    fn number_agreement_skips_mismatches() {
        assert_eq!(
            texts("The speakers are loud. The laptop has them."),
            ["The speakers are loud.", "The laptop has the speakers."]
        );
    }

    #[test]
    fn possessives_keep_their_marker() {
        assert_eq!(
            texts("The tablet is thin. Its battery lasts long."),
            ["The tablet is thin.", "The tablet's battery lasts long."]
        );
    }

    #[test]
    fn unresolvable_pronouns_stay() {
        assert_eq!(texts("It works."), ["It works."]);
        assert_eq!(texts("Hello there."), ["Hello there."]);
    }

    #[test]
    fn window_is_two_sentences() {
        let out = texts("The phone is new. Yes. Yes. It works.");
        assert_eq!(out[3], "It works.");
        let out = texts("The phone is new. Yes. It works.");
        assert_eq!(out[2], "The phone works.");
    }

    #[test]
    fn quantities_are_not_antecedents() {
        let out = texts("The laptop weighs 1.8 kg. It is light.");
        assert_eq!(out[1], "The laptop is light.");
    }

    #[test]
    fn demonstratives_only_when_standalone() {
        let out = texts("The camera is sharp. That lens is new. This is great.");
        assert_eq!(out[1], "That lens is new.");
        assert_eq!(out[2], "That lens is great.");
    }

    #[test]
    fn resolving_twice_changes_nothing() {
        let doc = RawDocument::new("d", "The laptop is thin. It has ports. They are fast and it charges them.");
        let once = preprocess_with(&doc, &Tokenizer::default(), &PosTagger::default()).unwrap();
        let twice = resolve_coreference(&once);
        assert_eq!(once, twice);
    }
}
