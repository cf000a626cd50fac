//! Document-grounded multi-turn chatbot engine.
//!
//! A document is split into pronoun-resolved sentences and indexed with BM25.
//! For each user message the closest sentences are retrieved, simple
//! subject-verb-object sentences are extracted from them, and every
//! candidate is scored against the conversation by an attentive sequential
//! matching network. When no candidate clears the score threshold the reply
//! comes from a small sequence-to-sequence chit-chat model instead.

pub mod candidates;
pub mod chitchat;
pub mod dialogue;
pub mod docstore;
pub mod error;
pub mod gradsuite;
pub mod matcher;
pub mod retrieval;
pub mod synth;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
