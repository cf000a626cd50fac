use serde::{Deserialize, Serialize};

use super::tagger::is_terminal;
use super::token::Token;

/// Input document as supplied by a user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl RawDocument {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        RawDocument {
            doc_id: doc_id.into(),
            text: text.into(),
            title: None,
        }
    }
}

/// One sentence of a preprocessed document. Token spans are byte ranges into
/// `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn surface(&self, range: std::ops::Range<usize>) -> &str {
        let start = self.tokens[range.start].span.start;
        let end = self.tokens[range.end - 1].span.end;
        &self.text[start..end]
    }
}

const CLOSERS: &[&str] = &["\"", "'", ")", "]", "}", "\u{201d}", "\u{2019}", "\u{bb}"];

/// Cuts a tagged token stream (spans relative to `doc.text`) into sentences at
/// `.`, `!` and `?`. Abbreviations and decimals never reach this point as
/// separate periods because the tokenizer keeps them attached.
pub fn split_sentences(doc: &RawDocument, tokens: &[Token]) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        if is_terminal(&tokens[i].surface) {
            let mut end = i + 1;
            while end < tokens.len()
                && tokens[end].span.start == tokens[end - 1].span.end
                && (is_terminal(&tokens[end].surface) || CLOSERS.contains(&tokens[end].surface.as_str()))
            {
                end += 1;
            }
            sentences.push(make_sentence(doc, &tokens[start..end], sentences.len()));
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < tokens.len() {
        sentences.push(make_sentence(doc, &tokens[start..], sentences.len()));
    }
    sentences
}

fn make_sentence(doc: &RawDocument, tokens: &[Token], index: usize) -> Sentence {
    let base = tokens[0].span.start;
    let end = tokens[tokens.len() - 1].span.end;
    Sentence {
        doc_id: doc.doc_id.clone(),
        index,
        text: doc.text[base..end].to_string(),
        tokens: tokens
            .iter()
            .map(|t| Token {
                surface: t.surface.clone(),
                pos: t.pos,
                span: t.span.start - base..t.span.end - base,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{tokenize, PosTagger};

    fn split(text: &str) -> Vec<String> {
        let doc = RawDocument::new("d", text);
        let tokens = PosTagger::default().tag(&tokenize(text));
        split_sentences(&doc, &tokens).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn splits_on_terminal_punctuation() {
        assert_eq!(split("A phone. A laptop? Yes!"), ["A phone.", "A laptop?", "Yes!"]);
    }

    #[test]
    fn decimal_point_does_not_split() {
        assert_eq!(split("It costs 3.5 dollars."), ["It costs 3.5 dollars."]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(
            split("Dr. Lee wrote it, e.g. for students. Then it shipped."),
            ["Dr. Lee wrote it, e.g. for students.", "Then it shipped."]
        );
    }

    #[test]
    fn trailing_text_and_closers() {
        assert_eq!(split("Really?! \"Yes.\" no end"), ["Really?!", "\"Yes.\"", "no end"]);
        assert!(split("").is_empty());
    }

    #[test]
    fn token_spans_are_sentence_relative() {
        let doc = RawDocument::new("d", "One two. Three four.");
        let tokens = PosTagger::default().tag(&tokenize(&doc.text));
        let sentences = split_sentences(&doc, &tokens);
        assert_eq!(sentences[1].index, 1);
        for s in &sentences {
            for t in &s.tokens {
                assert_eq!(&s.text[t.span.clone()], t.surface);
            }
        }
    }
}
