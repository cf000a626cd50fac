//! Document preparation: tokenization, tagging, sentence splitting and
//! pronoun resolution.

mod chunk;
mod coref;
mod sentence;
mod tagger;
mod token;

pub use chunk::noun_phrases;
pub use coref::{
    antecedent_mentions, resolve_coreference, CorefResolver, GrammaticalNumber, Mention, MentionKind,
    ANTECEDENT_WINDOW,
};
pub(crate) use coref::capitalize;
pub use sentence::{split_sentences, RawDocument, Sentence};
pub use tagger::{tag_pos, PosTagger};
pub use token::{tokenize, RawToken, Tag, Token, Tokenizer};

use crate::error::{Error, Result};

/// Loaded tokenizer and tagger, shared read-only by every pipeline call.
#[derive(Debug, Clone, Default)]
pub struct TextPipeline {
    pub tokenizer: Tokenizer,
    pub tagger: PosTagger,
}

impl TextPipeline {
    pub fn new(tokenizer: Tokenizer, tagger: PosTagger) -> Self {
        TextPipeline { tokenizer, tagger }
    }

    pub fn preprocess(&self, doc: &RawDocument) -> Result<Vec<Sentence>> {
        preprocess_with(doc, &self.tokenizer, &self.tagger)
    }

    /// Lowercased content terms (punctuation dropped) as used by retrieval and
    /// the matcher vocabulary.
    pub fn terms(&self, text: &str) -> Vec<String> {
        content_terms(&self.tokenizer, text)
    }
}

pub(crate) fn content_terms(tokenizer: &Tokenizer, text: &str) -> Vec<String> {
    tokenizer
        .tokenize(text)
        .into_iter()
        .filter(|t| !token::is_punctuation(&t.surface))
        .map(|t| t.surface.to_lowercase())
        .collect()
}

/// [`TextPipeline::terms`] with the shipped abbreviation list.
pub fn normalized_terms(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !token::is_punctuation(&t.surface))
        .map(|t| t.surface.to_lowercase())
        .collect()
}

pub(crate) fn split_only(doc: &RawDocument, tokenizer: &Tokenizer, tagger: &PosTagger) -> Vec<Sentence> {
    let tokens = tagger.tag(&tokenizer.tokenize(&doc.text));
    split_sentences(doc, &tokens)
}

/// Splits, tags and pronoun-resolves a document with the given models.
pub fn preprocess_with(doc: &RawDocument, tokenizer: &Tokenizer, tagger: &PosTagger) -> Result<Vec<Sentence>> {
    if doc.text.trim().is_empty() {
        return Err(Error::Ingest(format!("document {:?} has no text", doc.doc_id)));
    }
    let sentences = split_only(doc, tokenizer, tagger);
    Ok(CorefResolver::new(tokenizer.clone(), tagger.clone()).resolve(&sentences))
}

/// Splits, tags and pronoun-resolves a document with the given tagger and
/// the shipped abbreviation list.
pub fn preprocess_document(doc: &RawDocument, tagger: &PosTagger) -> Result<Vec<Sentence>> {
    preprocess_with(doc, &Tokenizer::default(), tagger)
}

pub(crate) fn token_is_punct(surface: &str) -> bool {
    token::is_punctuation(surface)
}
