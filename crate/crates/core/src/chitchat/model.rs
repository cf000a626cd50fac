use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{chat_tokens, dedup_pairs, ChatPair, ChatVocab, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::tensor::{
    load_container, parse_container, save_container, write_container, AdditiveAttention, Dense, Gru, Optimizer,
    OptimizerConfig, ParamId, ParamSet, Tape, Var,
};

const MODEL_KIND: &str = "chitchat";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatHyperParams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Longest query kept, counting from the end.
    pub max_source_len: usize,
    /// Longest reply trained on, counting from the start.
    pub max_target_len: usize,
    pub min_token_freq: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for ChatHyperParams {
    fn default() -> Self {
        ChatHyperParams {
            embed_dim: 32,
            hidden_dim: 64,
            max_source_len: 20,
            max_target_len: 20,
            min_token_freq: 1,
            batch_size: 16,
            learning_rate: 0.005,
            epochs: 40,
            clip_norm: 5.0,
            seed: 42,
        }
    }
}

impl ChatHyperParams {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_source_len", self.max_source_len),
            ("max_target_len", self.max_target_len),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seq2SeqLayout {
    pub embedding: ParamId,
    pub encoder: Gru,
    pub decoder: Gru,
    pub attention: AdditiveAttention,
    pub output: Dense,
}

impl Seq2SeqLayout {
    fn init(params: &mut ParamSet, hp: &ChatHyperParams, vocab_size: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (e, h) = (hp.embed_dim, hp.hidden_dim);
        Ok(Seq2SeqLayout {
            embedding: params.add_xavier("embedding", &[vocab_size, e], rng)?,
            encoder: Gru::new(params, "encoder", e, h, rng)?,
            decoder: Gru::new(params, "decoder", e, h, rng)?,
            attention: AdditiveAttention::new(params, "attention", h, h, h, rng)?,
            output: Dense::new(params, "output", 2 * h, vocab_size, true, rng)?,
        })
    }

    fn find(params: &ParamSet) -> Result<Self> {
        Ok(Seq2SeqLayout {
            embedding: params
                .id("embedding")
                .ok_or_else(|| Error::Model("missing parameter embedding".into()))?,
            encoder: Gru::find(params, "encoder")?,
            decoder: Gru::find(params, "decoder")?,
            attention: AdditiveAttention::find(params, "attention")?,
            output: Dense::find(params, "output")?,
        })
    }
}

/// Attention encoder-decoder over a shared embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    pub hp: ChatHyperParams,
    pub vocab: ChatVocab,
    pub params: ParamSet,
    pub layout: Seq2SeqLayout,
}

#[derive(Serialize, Deserialize)]
struct ModelMetadata {
    kind: String,
    hyper_params: ChatHyperParams,
    vocabulary: ChatVocab,
}

/// Encoder output for a batch of queries.
pub(crate) struct Encoded {
    pub states: Var,
    pub last: Var,
    pub mask: Vec<bool>,
}

impl Seq2SeqModel {
    pub fn new(hp: ChatHyperParams, vocab: ChatVocab) -> Result<Self> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut params = ParamSet::new();
        let layout = Seq2SeqLayout::init(&mut params, &hp, vocab.len(), &mut rng)?;
        Ok(Seq2SeqModel {
            hp,
            vocab,
            params,
            layout,
        })
    }

    /// Query ids (last `max_source_len` tokens) followed by `<eos>`, so no
    /// source is empty.
    pub fn encode_query(&self, query: &str) -> Vec<usize> {
        let ids = self.vocab.encode(query);
        let keep = self.hp.max_source_len.saturating_sub(1);
        let mut ids = ids[ids.len().saturating_sub(keep)..].to_vec();
        ids.push(EOS);
        ids
    }

    fn encode_reply(&self, reply: &str) -> Vec<usize> {
        let mut ids = self.vocab.encode(reply);
        ids.truncate(self.hp.max_target_len);
        ids
    }

    pub(crate) fn encode_sources(&self, tape: &mut Tape, sources: &[Vec<usize>]) -> Result<Encoded> {
        let (b, s, e) = (sources.len(), sources.iter().map(Vec::len).max().unwrap_or(1), self.hp.embed_dim);
        let mut ids = Vec::with_capacity(b * s);
        let mut mask = Vec::with_capacity(b * s);
        for src in sources {
            for t in 0..s {
                ids.push(src.get(t).copied().unwrap_or(PAD));
                mask.push(t < src.len());
            }
        }
        let table = tape.param(&self.params, self.layout.embedding);
        let emb = tape.embedding_lookup(table, &ids)?;
        let emb = tape.reshape(emb, &[b, s, e])?;
        let m: Vec<f64> = mask.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        let enc = self.layout.encoder.bind(tape, &self.params);
        let out = enc.run(tape, emb, Some(&m), None)?;
        Ok(Encoded {
            states: out.states,
            last: out.last,
            mask,
        })
    }

    /// Output logits `[N, V]` from decoder states `[N, L, h]`.
    pub(crate) fn project(&self, tape: &mut Tape, enc: &Encoded, dec_states: Var) -> Result<Var> {
        let shape = tape.shape(dec_states).to_vec();
        let att = self.layout.attention.bind(tape, &self.params);
        let weights = att.weights(tape, enc.states, dec_states, Some(&enc.mask))?;
        let context = att.context(tape, weights, enc.states)?;
        let joined = tape.concat(&[dec_states, context], 2)?;
        let joined = tape.reshape(joined, &[shape[0] * shape[1], 2 * self.hp.hidden_dim])?;
        self.layout.output.forward(tape, &self.params, joined)
    }

    /// Teacher-forced mean cross-entropy per target token.
    pub fn batch_loss(&self, tape: &mut Tape, pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<Var> {
        let sources: Vec<Vec<usize>> = pairs.iter().map(|p| p.0.clone()).collect();
        let enc = self.encode_sources(tape, &sources)?;
        let (b, e) = (pairs.len(), self.hp.embed_dim);
        let l = pairs.iter().map(|p| p.1.len() + 1).max().unwrap_or(1);
        let mut inputs = Vec::with_capacity(b * l);
        let mut targets = Vec::with_capacity(b * l);
        let mut weights = Vec::with_capacity(b * l);
        for (_, reply) in pairs {
            for t in 0..l {
                let valid = t <= reply.len();
                inputs.push(if t == 0 { BOS } else { reply.get(t - 1).copied().unwrap_or(PAD) });
                targets.push(if t < reply.len() { reply[t] } else if valid { EOS } else { PAD });
                weights.push(if valid { 1.0 } else { 0.0 });
            }
        }
        let table = tape.param(&self.params, self.layout.embedding);
        let emb = tape.embedding_lookup(table, &inputs)?;
        let emb = tape.reshape(emb, &[b, l, e])?;
        let dec = self.layout.decoder.bind(tape, &self.params);
        let states = dec.run(tape, emb, Some(&weights), Some(enc.last))?.states;
        let logits = self.project(tape, &enc, states)?;
        tape.cross_entropy(logits, &targets, &weights)
    }

    fn encode_pairs(&self, pairs: &[ChatPair]) -> Vec<(Vec<usize>, Vec<usize>)> {
        pairs
            .iter()
            .map(|p| (self.encode_query(&p.query), self.encode_reply(&p.reply)))
            .collect()
    }

    /// Token-weighted mean loss over `pairs` without updating anything.
    pub fn mean_loss(&self, pairs: &[ChatPair]) -> Result<f64> {
        let encoded = self.encode_pairs(pairs);
        let (mut total, mut tokens) = (0.0, 0usize);
        for chunk in encoded.chunks(self.hp.batch_size) {
            let mut tape = Tape::new();
            let loss = self.batch_loss(&mut tape, chunk)?;
            let n: usize = chunk.iter().map(|p| p.1.len() + 1).sum();
            total += tape.value(loss).item() * n as f64;
            tokens += n;
        }
        Ok(total / tokens.max(1) as f64)
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::to_value(ModelMetadata {
            kind: MODEL_KIND.into(),
            hyper_params: self.hp.clone(),
            vocabulary: self.vocab.clone(),
        })
        .expect("metadata serializes")
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_container(&self.params, &self.metadata(), &mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, meta) = parse_container(bytes)?;
        Self::from_parts(params, meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_container(path, &self.params, &self.metadata())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = load_container(path)?;
        Self::from_parts(params, meta).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
    }

    fn from_parts(params: ParamSet, meta: serde_json::Value) -> Result<Self> {
        let meta: ModelMetadata =
            serde_json::from_value(meta).map_err(|e| Error::Model(format!("bad chit-chat manifest: {e}")))?;
        if meta.kind != MODEL_KIND {
            return Err(Error::Model(format!("expected a chit-chat model, found {:?}", meta.kind)));
        }
        meta.hyper_params.validate()?;
        let layout = Seq2SeqLayout::find(&params)?;
        let expected = [meta.vocabulary.len(), meta.hyper_params.embed_dim];
        if params.value(layout.embedding).shape() != expected {
            return Err(Error::Model("embedding shape disagrees with the manifest".into()));
        }
        Ok(Seq2SeqModel {
            hp: meta.hyper_params,
            vocab: meta.vocabulary,
            params,
            layout,
        })
    }
}

/// Deduplicates the pairs, builds a vocabulary and trains with Adam on
/// shuffled minibatches. Returns the model and the mean loss of each epoch.
pub fn train_seq2seq(
    pairs: &[ChatPair],
    hp: ChatHyperParams,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(Seq2SeqModel, Vec<f64>)> {
    hp.validate()?;
    let pairs = dedup_pairs(pairs);
    if pairs.is_empty() || pairs.iter().all(|p| chat_tokens(&p.reply).is_empty()) {
        return Err(Error::Training("chit-chat corpus has no usable pairs".into()));
    }
    let vocab = ChatVocab::build(&pairs, hp.min_token_freq);
    let model = Seq2SeqModel::new(hp, vocab)?;
    train_model(model, &pairs, on_epoch)
}

/// Continues training an existing model on `pairs` as given.
pub fn train_model(
    mut model: Seq2SeqModel,
    pairs: &[ChatPair],
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(Seq2SeqModel, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::Training("chit-chat corpus is empty".into()));
    }
    let hp = model.hp.clone();
    let encoded = model.encode_pairs(pairs);
    let mut optimizer = Optimizer::new(OptimizerConfig {
        clip_norm: Some(hp.clip_norm),
        ..OptimizerConfig::adam(hp.learning_rate)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut history = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut tokens) = (0.0, 0usize);
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<(Vec<usize>, Vec<usize>)> = chunk.iter().map(|&i| encoded[i].clone()).collect();
            let mut tape = Tape::new();
            let loss = model.batch_loss(&mut tape, &batch)?;
            let n: usize = batch.iter().map(|p| p.1.len() + 1).sum();
            total += tape.value(loss).item() * n as f64;
            tokens += n;
            let grads = tape.backward(loss)?;
            model.params.accumulate(&grads);
            optimizer.step(&mut model.params)?;
        }
        let mean = total / tokens as f64;
        on_epoch(epoch, mean);
        history.push(mean);
    }
    Ok((model, history))
}
