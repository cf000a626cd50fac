use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

const DEFAULT_ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");

/// Closed part-of-speech tag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    Noun,
    ProperNoun,
    Pronoun,
    Verb,
    Modal,
    Adjective,
    Adverb,
    Determiner,
    Preposition,
    Particle,
    InfinitiveMarker,
    Number,
    Punctuation,
    Other,
}

impl Tag {
    pub const ALL: [Tag; 14] = [
        Tag::Noun,
        Tag::ProperNoun,
        Tag::Pronoun,
        Tag::Verb,
        Tag::Modal,
        Tag::Adjective,
        Tag::Adverb,
        Tag::Determiner,
        Tag::Preposition,
        Tag::Particle,
        Tag::InfinitiveMarker,
        Tag::Number,
        Tag::Punctuation,
        Tag::Other,
    ];

    /// Short label used in the lexicon data file.
    pub fn label(self) -> &'static str {
        match self {
            Tag::Noun => "NOUN",
            Tag::ProperNoun => "PROPN",
            Tag::Pronoun => "PRON",
            Tag::Verb => "VERB",
            Tag::Modal => "MODAL",
            Tag::Adjective => "ADJ",
            Tag::Adverb => "ADV",
            Tag::Determiner => "DET",
            Tag::Preposition => "PREP",
            Tag::Particle => "PRT",
            Tag::InfinitiveMarker => "TO",
            Tag::Number => "NUM",
            Tag::Punctuation => "PUNCT",
            Tag::Other => "OTHER",
        }
    }

    pub fn is_nominal(self) -> bool {
        matches!(self, Tag::Noun | Tag::ProperNoun)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tag::ALL
            .iter()
            .copied()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown POS tag {s:?}")))
    }
}

/// A token before tagging. `span` is a byte range into the text it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawToken {
    pub surface: String,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: Tag,
    pub span: Range<usize>,
}

impl Token {
    pub fn is_punct(&self) -> bool {
        self.pos == Tag::Punctuation
    }
}

/// Splits text on Unicode word boundaries, drops whitespace, and re-attaches
/// the trailing period of known abbreviations.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    abbreviations: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::from_abbreviation_list(DEFAULT_ABBREVIATIONS)
    }
}

impl Tokenizer {
    /// One abbreviation per line, including its final period. `#` starts a comment.
    pub fn from_abbreviation_list(list: &str) -> Self {
        let abbreviations = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Tokenizer { abbreviations }
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_abbreviation_list(&text))
    }

    pub fn is_abbreviation(&self, word_with_period: &str) -> bool {
        self.abbreviations.contains(&word_with_period.to_lowercase())
    }

    pub fn tokenize(&self, text: &str) -> Vec<RawToken> {
        let mut out: Vec<RawToken> = Vec::new();
        let segments: Vec<(usize, &str)> = text
            .split_word_bound_indices()
            .filter(|(_, s)| !s.chars().all(char::is_whitespace))
            .collect();
        let mut i = 0;
        while i < segments.len() {
            let (start, seg) = segments[i];
            let mut end = start + seg.len();
            if let Some(&(next_start, ".")) = segments.get(i + 1) {
                if next_start == end && self.is_abbreviation(&format!("{seg}.")) {
                    end += 1;
                    i += 1;
                }
            }
            out.push(RawToken {
                surface: text[start..end].to_string(),
                span: start..end,
            });
            i += 1;
        }
        out
    }
}

/// Tokenizes with the shipped abbreviation list.
pub fn tokenize(text: &str) -> Vec<RawToken> {
    thread_local! {
        static DEFAULT: Tokenizer = Tokenizer::default();
    }
    DEFAULT.with(|t| t.tokenize(text))
}

pub(crate) fn is_punctuation(surface: &str) -> bool {
    !surface.is_empty() && surface.chars().all(|c| !c.is_alphanumeric())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.surface).collect()
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn punctuation_is_split_from_words() {
        assert_eq!(surfaces("Hello, world!"), ["Hello", ",", "world", "!"]);
    }

    #[test]
    fn camel_case_names_stay_whole() {
        assert_eq!(surfaces("ZenBook Pro"), ["ZenBook", "Pro"]);
    }

    #[test]
    fn decimals_and_abbreviations_keep_their_periods() {
        assert_eq!(
            surfaces("It costs 3.5 dollars, e.g. in the U.S. today."),
            ["It", "costs", "3.5", "dollars", ",", "e.g.", "in", "the", "U.S.", "today", "."]
        );
        assert_eq!(surfaces("Mr. Smith"), ["Mr.", "Smith"]);
    }

    #[test]
    fn spans_point_back_into_the_text() {
        let text = "Déjà vu, naïve café.";
        for t in tokenize(text) {
            assert_eq!(&text[t.span.clone()], t.surface);
        }
    }

    #[test]
    fn tag_labels_round_trip() {
        for tag in Tag::ALL {
            assert_eq!(tag.label().parse::<Tag>().unwrap(), tag);
        }
        assert!("NN".parse::<Tag>().is_err());
    }
}
