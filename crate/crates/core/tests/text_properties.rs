use docbot::text::{tokenize, RawDocument, TextPipeline};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn token_spans_cover_their_surface_in_order(text in "[a-zA-Z0-9 .,!?'-]{0,200}") {
        let tokens = tokenize(&text);
        let mut last = 0;
        for t in &tokens {
            prop_assert_eq!(&text[t.span.clone()], t.surface.as_str());
            prop_assert!(t.span.start >= last);
            prop_assert!(!t.surface.trim().is_empty());
            last = t.span.end;
        }
        let kept: String = tokens.iter().map(|t| t.surface.as_str()).collect();
        let expected: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn sentences_are_numbered_and_keep_their_document(
        words in prop::collection::vec("[a-z]{1,8}", 1..40),
        breaks in prop::collection::vec(any::<bool>(), 40),
    ) {
        let mut text = String::new();
        for (i, w) in words.iter().enumerate() {
            text.push_str(w);
            text.push_str(if breaks[i] { ". " } else { " " });
        }
        let sentences = TextPipeline::default().preprocess(&RawDocument::new("doc", &text)).unwrap();
        prop_assert!(!sentences.is_empty());
        for (i, s) in sentences.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert_eq!(s.doc_id.as_str(), "doc");
            prop_assert!(!s.tokens.is_empty());
        }
    }
}

#[test]
fn whitespace_only_document_is_rejected() {
    assert!(TextPipeline::default().preprocess(&RawDocument::new("d", " \n\t ")).is_err());
}
