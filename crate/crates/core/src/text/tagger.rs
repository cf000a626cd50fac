//! Lexicon-driven part-of-speech tagger.
//!
//! Each surface form maps to a default tag plus optional alternatives. Unknown
//! words fall back to capitalization and suffix rules, and a small set of
//! contextual rules resolves the common noun/verb and `to` ambiguities.

use std::collections::HashMap;
use std::path::Path;

use super::token::{is_punctuation, RawToken, Tag, Token};
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");

const AUXILIARIES: &[&str] = &[
    "be", "is", "am", "are", "was", "were", "been", "being", "have", "has", "had", "having", "do",
    "does", "did",
];

const SUBJECT_PRONOUNS: &[&str] = &["i", "you", "we", "they"];

const POSSESSIVE_PRONOUNS: &[&str] = &["its", "their", "his", "her", "my", "your", "our"];

const DEMONSTRATIVES: &[&str] = &["this", "that", "these", "those"];

#[derive(Debug, Clone)]
pub struct PosTagger {
    lexicon: HashMap<String, Vec<Tag>>,
}

impl Default for PosTagger {
    fn default() -> Self {
        Self::from_lexicon(DEFAULT_LEXICON).expect("shipped lexicon parses")
    }
}

impl PosTagger {
    /// Parses `surface<TAB>tag` lines. The first line for a surface sets its
    /// default tag.
    pub fn from_lexicon(text: &str) -> Result<Self> {
        let mut lexicon: HashMap<String, Vec<Tag>> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, tag) = line.split_once('\t').ok_or_else(|| {
                Error::Config(format!("lexicon line {}: expected surface<TAB>tag", n + 1))
            })?;
            let tag: Tag = tag
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("lexicon line {}: {e}", n + 1)))?;
            let tags = lexicon.entry(surface.to_lowercase()).or_default();
            if !tags.contains(&tag) {
                tags.push(tag);
            }
        }
        if lexicon.is_empty() {
            return Err(Error::Config("lexicon is empty".into()));
        }
        Ok(PosTagger { lexicon })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read tagger lexicon {}: {e}", path.display())))?;
        Self::from_lexicon(&text)
    }

    pub fn lexicon_tags(&self, word: &str) -> Option<&[Tag]> {
        self.lexicon.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    fn can_be(&self, word: &str, tag: Tag) -> bool {
        match self.lexicon_tags(word) {
            Some(tags) => tags.contains(&tag),
            None => tag == Tag::Verb && guess_unknown(word, false) == Tag::Verb,
        }
    }

    fn initial_tag(&self, surface: &str, sentence_initial: bool) -> Tag {
        if is_punctuation(surface) {
            return Tag::Punctuation;
        }
        if surface.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            return Tag::Number;
        }
        let lower = surface.to_lowercase();
        if let Some(tags) = self.lexicon.get(&lower) {
            // Mixed-case names like "iPhone" shadow lexicon words only when
            // they are not plain capitalizations.
            if !has_inner_uppercase(surface) {
                return tags[0];
            }
        }
        if let Some(stem) = strip_possessive(&lower) {
            if self.lexicon.contains_key(stem) && !has_inner_uppercase(surface) {
                return Tag::Noun;
            }
        }
        guess_unknown(surface, sentence_initial)
    }

    /// Tags a token stream. Sentence starts are detected from terminal
    /// punctuation so the stream may span several sentences.
    pub fn tag(&self, tokens: &[RawToken]) -> Vec<Token> {
        let mut tags: Vec<Tag> = Vec::with_capacity(tokens.len());
        let mut sentence_initial = true;
        for t in tokens {
            tags.push(self.initial_tag(&t.surface, sentence_initial));
            sentence_initial = is_terminal(&t.surface);
        }

        for i in 0..tokens.len() {
            let word = tokens[i].surface.to_lowercase();
            // Capitalized words continuing a name ("ZenBook Pro") join it.
            if i > 0
                && tags[i - 1] == Tag::ProperNoun
                && matches!(tags[i], Tag::Noun | Tag::Adjective)
                && tokens[i].surface.chars().next().is_some_and(char::is_uppercase)
            {
                tags[i] = Tag::ProperNoun;
                continue;
            }
            let prev = i.checked_sub(1).map(|p| (tags[p], tokens[p].surface.to_lowercase()));
            let next = tokens.get(i + 1).map(|t| t.surface.as_str());

            if word == "to" {
                tags[i] = match next {
                    Some(n) if self.can_be(n, Tag::Verb) && !self.can_be(n, Tag::Determiner) => {
                        Tag::InfinitiveMarker
                    }
                    _ => Tag::Preposition,
                };
                continue;
            }

            let Some((prev_tag, prev_word)) = prev else {
                continue;
            };
            match tags[i] {
                Tag::Verb if !AUXILIARIES.contains(&word.as_str()) => {
                    let after_nominal_modifier = matches!(prev_tag, Tag::Adjective | Tag::Number)
                        || (prev_tag == Tag::Determiner
                            && !DEMONSTRATIVES.contains(&prev_word.as_str()))
                        || POSSESSIVE_PRONOUNS.contains(&prev_word.as_str())
                        || strip_possessive(&prev_word).is_some();
                    let gerund_after_preposition =
                        prev_tag == Tag::Preposition && word.ends_with("ing");
                    // "for video calls": a compound head inside a prepositional phrase
                    let compound_in_pp = prev_tag == Tag::Noun
                        && i >= 2
                        && tags[i - 2] == Tag::Preposition
                        && self.can_be(&word, Tag::Noun);
                    if after_nominal_modifier || gerund_after_preposition || compound_in_pp {
                        tags[i] = Tag::Noun;
                    }
                }
                Tag::Noun => {
                    let verb_context = matches!(prev_tag, Tag::Modal | Tag::InfinitiveMarker)
                        || SUBJECT_PRONOUNS.contains(&prev_word.as_str());
                    if verb_context && self.can_be(&word, Tag::Verb) {
                        tags[i] = Tag::Verb;
                    }
                }
                _ => {}
            }
        }

        tokens
            .iter()
            .zip(tags)
            .map(|(t, pos)| Token {
                surface: t.surface.clone(),
                pos,
                span: t.span.clone(),
            })
            .collect()
    }
}

/// Tags with the shipped lexicon.
pub fn tag_pos(tokens: &[RawToken], tagger: &PosTagger) -> Vec<Token> {
    tagger.tag(tokens)
}

pub(crate) fn is_terminal(surface: &str) -> bool {
    matches!(surface, "." | "!" | "?")
}

fn has_inner_uppercase(surface: &str) -> bool {
    surface.chars().skip(1).any(char::is_uppercase)
}

fn strip_possessive(lower: &str) -> Option<&str> {
    lower
        .strip_suffix("'s")
        .or_else(|| lower.strip_suffix("\u{2019}s"))
        .filter(|s| !s.is_empty())
}

fn guess_unknown(surface: &str, sentence_initial: bool) -> Tag {
    let lower = surface.to_lowercase();
    let capitalized = surface.chars().next().is_some_and(char::is_uppercase);
    if has_inner_uppercase(surface) || (capitalized && !sentence_initial) {
        return Tag::ProperNoun;
    }
    let suffix_tag = if lower.ends_with("ly") && lower.len() > 4 {
        Some(Tag::Adverb)
    } else if (lower.ends_with("ed") || lower.ends_with("ing")) && lower.len() > 4 {
        Some(Tag::Verb)
    } else if ["ous", "ful", "ive", "able", "ible", "less", "ic"]
        .iter()
        .any(|s| lower.ends_with(s) && lower.len() > s.len() + 2)
    {
        Some(Tag::Adjective)
    } else {
        None
    };
    match suffix_tag {
        Some(tag) => tag,
        None if capitalized => Tag::ProperNoun,
        None if surface.chars().all(|c| !c.is_alphabetic()) => Tag::Other,
        None => Tag::Noun,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn tags(text: &str) -> Vec<Tag> {
        PosTagger::default()
            .tag(&tokenize(text))
            .into_iter()
            .map(|t| t.pos)
            .collect()
    }

    #[test]
    fn lexicon_lookup() {
        assert_eq!(tags("runs"), [Tag::Verb]);
        assert_eq!(tags("!"), [Tag::Punctuation]);
    }

    #[test]
    fn simple_copular_sentence() {
        assert_eq!(
            tags("The display is bright"),
            [Tag::Determiner, Tag::Noun, Tag::Verb, Tag::Adjective]
        );
    }

    #[test]
    fn unknown_words_default_to_nouns_and_names() {
        assert_eq!(tags("zorb"), [Tag::Noun]);
        assert_eq!(tags("the ZenBook"), [Tag::Determiner, Tag::ProperNoun]);
        assert_eq!(tags("Lingke answers questions."), [
            Tag::ProperNoun,
            Tag::Verb,
            Tag::Noun,
            Tag::Punctuation
        ]);
    }

    #[test]
    fn contextual_rules() {
        assert_eq!(
            tags("it supports fast charging"),
            [Tag::Pronoun, Tag::Verb, Tag::Adjective, Tag::Noun]
        );
        assert_eq!(tags("to charge"), [Tag::InfinitiveMarker, Tag::Verb]);
        assert_eq!(
            tags("up to 10 hours"),
            [Tag::Particle, Tag::Preposition, Tag::Number, Tag::Noun]
        );
        assert_eq!(tags("you can display"), [Tag::Pronoun, Tag::Modal, Tag::Verb]);
        assert_eq!(tags("its features"), [Tag::Pronoun, Tag::Noun]);
    }

    #[test]
    fn malformed_lexicon_is_a_configuration_error() {
        assert!(matches!(
            PosTagger::from_lexicon("word NOUN"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PosTagger::from_lexicon("word\tNN"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PosTagger::from_file(Path::new("/nonexistent/lexicon.tsv")),
            Err(Error::Config(_))
        ));
    }
}
