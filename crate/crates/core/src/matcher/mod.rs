//! Response selection: ranks candidate responses against a multi-turn
//! context and evaluates rankings with `R_n@k`.

mod data;
mod hyper;
mod metrics;
mod model;
mod tfidf;
mod train;
mod vocab;

pub use data::{
    encode_context, encode_example, encode_utterance, group_candidates, load_examples, read_examples,
    write_examples, DialogueExample, EncodedExample,
};
pub use hyper::HyperParams;
pub use metrics::{best_positive_rank, recall_at_k, EvalReport};
pub use model::{batch_loss, forward_logits, self_match, Batch, MatcherLayout, MatcherModel, PairRef};
pub use tfidf::TfIdfModel;
pub use train::{
    build_vocabulary, encode_examples, evaluate_model, evaluate_with, mean_loss, train_matcher, train_model,
    EncodedEvalSet, EpochRecord, TrainHistory,
};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
