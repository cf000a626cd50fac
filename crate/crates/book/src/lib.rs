//! The guide under `book/src`, compiled as doc comments so `cargo test`
//! runs every Rust listing in it.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/documents.md")]
pub mod documents {}
#[doc = include_str!("../../../book/src/candidates.md")]
pub mod candidates {}
#[doc = include_str!("../../../book/src/matching.md")]
pub mod matching {}
#[doc = include_str!("../../../book/src/chitchat.md")]
pub mod chitchat {}
#[doc = include_str!("../../../book/src/dialogue.md")]
pub mod dialogue {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
