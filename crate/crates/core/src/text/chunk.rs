use std::ops::Range;

use super::token::{Tag, Token};

fn in_noun_phrase(tag: Tag) -> bool {
    matches!(
        tag,
        Tag::Determiner | Tag::Adjective | Tag::Number | Tag::Noun | Tag::ProperNoun
    )
}

/// Noun phrases: maximal runs of determiner/adjective/number/noun tokens,
/// trimmed so they end on a noun or proper noun. Runs without a noun are not
/// phrases.
pub fn noun_phrases(tokens: &[Token]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !in_noun_phrase(tokens[i].pos) {
            i += 1;
            continue;
        }
        let start = i;
        while i < tokens.len() && in_noun_phrase(tokens[i].pos) {
            i += 1;
        }
        if let Some(last_noun) = (start..i).rev().find(|&j| tokens[j].pos.is_nominal()) {
            out.push(start..last_noun + 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{tokenize, PosTagger};

    fn phrases(text: &str) -> Vec<String> {
        let tokens = PosTagger::default().tag(&tokenize(text));
        noun_phrases(&tokens)
            .into_iter()
            .map(|r| {
                tokens[r]
                    .iter()
                    .map(|t| t.surface.as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    #[test]
    fn chunks_determiner_adjective_noun_runs() {
        assert_eq!(
            phrases("The laptop has a 4K screen and a bright display."),
            ["The laptop", "a 4K screen", "a bright display"]
        );
    }

    #[test]
    fn runs_without_a_noun_are_dropped() {
        assert!(phrases("it is very bright").is_empty());
        assert_eq!(phrases("the fast one"), Vec::<String>::new());
    }
}
