//! Fallback replies: an attention encoder-decoder when a model is loaded,
//! and a fixed rotation of canned responses otherwise.

mod data;
mod decode;
mod model;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

pub use data::{
    chat_tokens, dedup_pairs, detokenize, load_pairs, read_pairs, write_pairs, ChatPair, ChatVocab, BOS, EOS, PAD,
    UNK,
};
pub use decode::{beam_decode, decode, generate_text, greedy_decode, DecodeConfig, DecodeStrategy};
pub use model::{train_model, train_seq2seq, ChatHyperParams, Seq2SeqLayout, Seq2SeqModel};

use crate::error::{Error, Result};

/// The shipped sample pairs (original, written for this crate).
pub const SAMPLE_PAIRS: &str = include_str!("../../data/chitchat_pairs.jsonl");
const DEFAULT_CANNED: &str = include_str!("../../data/canned.txt");

/// Parses a canned-response file: one reply per line, blank lines and lines
/// starting with `#` skipped.
pub fn parse_canned(text: &str) -> Result<Vec<String>> {
    let lines: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    if lines.is_empty() {
        return Err(Error::Config("canned response list is empty".into()));
    }
    Ok(lines)
}

pub fn load_canned(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_canned(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn default_canned() -> Vec<String> {
    parse_canned(DEFAULT_CANNED).expect("shipped canned list is valid")
}

/// Reply source for the fallback path. Shareable across threads; the canned
/// rotation advances atomically.
#[derive(Debug)]
pub struct ChitChat {
    model: Option<Seq2SeqModel>,
    decode: DecodeConfig,
    canned: Vec<String>,
    cursor: AtomicUsize,
}

impl ChitChat {
    pub fn new(model: Option<Seq2SeqModel>, decode: DecodeConfig, canned: Vec<String>) -> Result<Self> {
        decode.validate()?;
        if canned.is_empty() {
            return Err(Error::Config("canned response list is empty".into()));
        }
        Ok(ChitChat {
            model,
            decode,
            canned,
            cursor: AtomicUsize::new(0),
        })
    }

    /// No model, shipped canned list.
    pub fn canned_only() -> Self {
        Self::new(None, DecodeConfig::default(), default_canned()).expect("defaults are valid")
    }

    pub fn model_loaded(&self) -> bool {
        self.model.is_some()
    }

    pub fn model(&self) -> Option<&Seq2SeqModel> {
        self.model.as_ref()
    }

    pub fn decode_config(&self) -> &DecodeConfig {
        &self.decode
    }

    /// Next canned response, cycling through the list.
    pub fn next_canned(&self) -> String {
        let i = self.cursor.fetch_add(1, Ordering::Relaxed);
        self.canned[i % self.canned.len()].clone()
    }

    /// Generated reply, or the next canned one when no model is loaded or
    /// decoding yields nothing.
    pub fn reply(&self, query: &str) -> String {
        self.model
            .as_ref()
            .and_then(|m| generate_text(m, query, &self.decode).ok())
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| self.next_canned())
    }
}

#[cfg(test)]
mod tests;
