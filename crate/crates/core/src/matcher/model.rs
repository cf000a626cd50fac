//! The matching network: GRU utterance encoding, per-sequence self-matching
//! attention, two similarity channels per (utterance, response) pair, a
//! conv-pool matching vector per utterance and an accumulation GRU over the
//! utterances in chronological order, ending in a logistic score.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hyper::HyperParams;
use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::tensor::{
    load_container, parse_container, save_container, write_container, AdditiveAttention, Dense, Gru, ParamId,
    ParamSet, Tape, Tensor, Var,
};

const MODEL_KIND: &str = "matcher";

/// Where each learnable block lives in the [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatcherLayout {
    pub embedding: ParamId,
    pub encoder: Gru,
    pub self_attention: AdditiveAttention,
    pub gate: Dense,
    pub reencoder: Gru,
    pub bilinear: ParamId,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
    pub projection: Dense,
    pub accumulator: Gru,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

fn require(params: &ParamSet, name: &str, shape: &[usize]) -> Result<ParamId> {
    let id = params
        .id(name)
        .ok_or_else(|| Error::Model(format!("missing parameter {name}")))?;
    if params.value(id).shape() != shape {
        return Err(Error::Model(format!(
            "parameter {name} has shape {:?}, expected {shape:?}",
            params.value(id).shape()
        )));
    }
    Ok(id)
}

impl MatcherLayout {
    pub fn init(params: &mut ParamSet, hp: &HyperParams, vocab_size: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (e, h) = (hp.embed_dim, hp.hidden_dim);
        let k = hp.conv_kernel;
        Ok(MatcherLayout {
            embedding: params.add_xavier("embedding", &[vocab_size, e], rng)?,
            encoder: Gru::new(params, "encoder", e, h, rng)?,
            self_attention: AdditiveAttention::new(params, "self_match.attention", h, h, h, rng)?,
            gate: Dense::new(params, "self_match.gate", 2 * h, 2 * h, false, rng)?,
            reencoder: Gru::new(params, "self_match.gru", 2 * h, h, rng)?,
            bilinear: params.add_xavier("bilinear", &[h, h], rng)?,
            conv_w: params.add_xavier("conv.w", &[hp.conv_filters, 2, k, k], rng)?,
            conv_b: params.add_zeros("conv.b", &[hp.conv_filters])?,
            projection: Dense::new(params, "projection", hp.pooled_features(), hp.match_dim, true, rng)?,
            accumulator: Gru::new(params, "accumulator", hp.match_dim, h, rng)?,
            out_w: params.add_xavier("output.w", &[h, 1], rng)?,
            out_b: params.add_zeros("output.b", &[1])?,
        })
    }

    pub fn find(params: &ParamSet, hp: &HyperParams) -> Result<Self> {
        let (e, h) = (hp.embed_dim, hp.hidden_dim);
        let embedding = params
            .id("embedding")
            .ok_or_else(|| Error::Model("missing parameter embedding".into()))?;
        let vocab_size = params.value(embedding).shape()[0];
        let layout = MatcherLayout {
            embedding: require(params, "embedding", &[vocab_size, e])?,
            encoder: Gru::find(params, "encoder")?,
            self_attention: AdditiveAttention::find(params, "self_match.attention")?,
            gate: Dense::find(params, "self_match.gate")?,
            reencoder: Gru::find(params, "self_match.gru")?,
            bilinear: require(params, "bilinear", &[h, h])?,
            conv_w: require(params, "conv.w", &[hp.conv_filters, 2, hp.conv_kernel, hp.conv_kernel])?,
            conv_b: require(params, "conv.b", &[hp.conv_filters])?,
            projection: Dense::find(params, "projection")?,
            accumulator: Gru::find(params, "accumulator")?,
            out_w: require(params, "output.w", &[h, 1])?,
            out_b: require(params, "output.b", &[1])?,
        };
        require(params, "projection.w", &[hp.pooled_features(), hp.match_dim])?;
        if layout.encoder.hidden_dim != h || layout.accumulator.input_dim != hp.match_dim {
            return Err(Error::Model("recurrent layer sizes disagree with hyper-parameters".into()));
        }
        Ok(layout)
    }

    /// Parameters read only by the self-matching block.
    pub fn self_match_params(&self) -> Vec<ParamId> {
        let mut ids = self.self_attention.param_ids();
        ids.extend(self.gate.param_ids());
        ids.extend(self.reencoder.param_ids());
        ids
    }
}

/// One scoring request: context utterances (oldest first) and a response,
/// as token ids.
#[derive(Debug, Clone, Copy)]
pub struct PairRef<'a> {
    pub context: &'a [Vec<usize>],
    pub response: &'a [usize],
}

/// Fixed-shape inputs for a minibatch. Only non-empty utterances are
/// encoded; empty slots read a zero matching vector and are masked out of
/// the accumulation GRU.
#[derive(Debug, Clone)]
pub struct Batch {
    size: usize,
    /// Encoded sequences: the non-empty utterances, then one response per pair.
    utterances: usize,
    seq_ids: Vec<usize>,
    seq_mask: Vec<f64>,
    /// Batch row of each encoded utterance.
    owner: Vec<usize>,
    /// Row of the matching-vector table for each `(pair, slot)`; the last
    /// row is all zeros.
    slot_rows: Vec<usize>,
    slot_mask: Vec<f64>,
}

impl Batch {
    pub fn new(hp: &HyperParams, vocab_size: usize, pairs: &[PairRef<'_>]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Scoring("empty batch".into()));
        }
        let t_len = hp.image_side();
        let m = hp.max_utterances;
        let mut utt_tokens: Vec<&[usize]> = Vec::new();
        let mut owner = Vec::new();
        let mut slot_refs: Vec<Option<usize>> = Vec::with_capacity(pairs.len() * m);
        for (b, pair) in pairs.iter().enumerate() {
            let ctx = &pair.context[pair.context.len().saturating_sub(m)..];
            if ctx.iter().all(|u| u.is_empty()) {
                return Err(Error::Scoring("context has no non-empty utterance".into()));
            }
            slot_refs.extend(std::iter::repeat_n(None, m - ctx.len()));
            for u in ctx {
                if u.is_empty() {
                    slot_refs.push(None);
                } else {
                    slot_refs.push(Some(utt_tokens.len()));
                    utt_tokens.push(&u[u.len().saturating_sub(hp.max_tokens)..]);
                    owner.push(b);
                }
            }
        }
        let k = utt_tokens.len();
        let sequences = utt_tokens
            .into_iter()
            .chain(pairs.iter().map(|p| &p.response[p.response.len().saturating_sub(hp.max_tokens)..]));
        let mut seq_ids = Vec::with_capacity((k + pairs.len()) * t_len);
        let mut seq_mask = Vec::with_capacity((k + pairs.len()) * t_len);
        for tokens in sequences {
            if let Some(&bad) = tokens.iter().find(|&&id| id >= vocab_size) {
                return Err(Error::Data(format!("token id {bad} outside vocabulary of {vocab_size}")));
            }
            for i in 0..t_len {
                let id = tokens.get(i).copied();
                seq_ids.push(id.unwrap_or(PAD));
                seq_mask.push(if id.is_some() { 1.0 } else { 0.0 });
            }
        }
        let slot_mask = slot_refs.iter().map(|s| if s.is_some() { 1.0 } else { 0.0 }).collect();
        let slot_rows = slot_refs.iter().map(|s| s.unwrap_or(k)).collect();
        Ok(Batch {
            size: pairs.len(),
            utterances: k,
            seq_ids,
            seq_mask,
            owner,
            slot_rows,
            slot_mask,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }
}

/// Self-matching over each sequence of `h [N, T, hidden]`.
pub fn self_match(
    tape: &mut Tape,
    params: &ParamSet,
    layout: &MatcherLayout,
    h: Var,
    mask: &[f64],
) -> Result<Var> {
    let flags: Vec<bool> = mask.iter().map(|&m| m > 0.0).collect();
    let att = layout.self_attention.bind(tape, params);
    let weights = att.weights(tape, h, h, Some(&flags))?;
    let context = att.context(tape, weights, h)?;
    let joined = tape.concat(&[h, context], 2)?;
    let gate = layout.gate.forward(tape, params, joined)?;
    let gate = tape.sigmoid(gate);
    let gated = tape.mul(gate, joined)?;
    let gru = layout.reencoder.bind(tape, params);
    Ok(gru.run(tape, gated, Some(mask), None)?.states)
}

/// Logits `[B]` for a batch.
pub fn forward_logits(
    tape: &mut Tape,
    params: &ParamSet,
    layout: &MatcherLayout,
    hp: &HyperParams,
    batch: &Batch,
) -> Result<Var> {
    let t_len = hp.image_side();
    let (k, b) = (batch.utterances, batch.size);
    let n_seq = k + b;
    let e_dim = hp.embed_dim;

    let table = tape.param(params, layout.embedding);
    let emb = tape.embedding_lookup(table, &batch.seq_ids)?;
    let emb = tape.reshape(emb, &[n_seq, t_len, e_dim])?;
    let emb_mask = Tensor::from_fn(&[n_seq, t_len, e_dim], |i| batch.seq_mask[i / e_dim]);
    let emb_mask = tape.constant(emb_mask);
    let emb = tape.mul(emb, emb_mask)?;

    let encoder = layout.encoder.bind(tape, params);
    let states = encoder.run(tape, emb, Some(&batch.seq_mask), None)?.states;
    let states = if hp.self_match_enabled {
        self_match(tape, params, layout, states, &batch.seq_mask)?
    } else {
        states
    };

    let utt_rows: Vec<usize> = (0..k).collect();
    let resp_rows: Vec<usize> = batch.owner.iter().map(|&o| k + o).collect();
    let e_u = tape.index_select(emb, &utt_rows)?;
    let e_r = tape.index_select(emb, &resp_rows)?;
    let h_u = tape.index_select(states, &utt_rows)?;
    let h_r = tape.index_select(states, &resp_rows)?;

    let e_rt = tape.transpose(e_r)?;
    let m1 = tape.bmm(e_u, e_rt)?;
    let a = tape.param(params, layout.bilinear);
    let h_ua = tape.matmul(h_u, a)?;
    let h_rt = tape.transpose(h_r)?;
    let m2 = tape.bmm(h_ua, h_rt)?;

    let image = tape.stack(&[m1, m2], 1)?;
    let conv_w = tape.param(params, layout.conv_w);
    let conv_b = tape.param(params, layout.conv_b);
    let feat = tape.conv2d(image, conv_w, conv_b)?;
    let feat = tape.relu(feat);
    let feat = tape.maxpool2d(feat, hp.pool_window, hp.pool_stride)?;
    let feat = tape.reshape(feat, &[k, hp.pooled_features()])?;
    let v = layout.projection.forward(tape, params, feat)?;
    let v = tape.tanh(v);

    let zero = tape.constant(Tensor::zeros(&[1, hp.match_dim]));
    let v_table = tape.concat(&[v, zero], 0)?;
    let slots = tape.index_select(v_table, &batch.slot_rows)?;
    let slots = tape.reshape(slots, &[b, hp.max_utterances, hp.match_dim])?;
    let acc = layout.accumulator.bind(tape, params);
    let last = acc.run(tape, slots, Some(&batch.slot_mask), None)?.last;

    let w = tape.param(params, layout.out_w);
    let bias = tape.param(params, layout.out_b);
    let logit = tape.matmul(last, w)?;
    let logit = tape.add_bias(logit, bias)?;
    debug_assert_eq!(tape.shape(logit), &[b, 1]);
    tape.reshape(logit, &[b])
}

/// Mean binary cross-entropy of a labelled batch.
pub fn batch_loss(
    tape: &mut Tape,
    params: &ParamSet,
    layout: &MatcherLayout,
    hp: &HyperParams,
    batch: &Batch,
    labels: &[f64],
) -> Result<Var> {
    let logits = forward_logits(tape, params, layout, hp, batch)?;
    tape.bce_with_logits(logits, labels)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A trained (or freshly initialized) matcher with its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherModel {
    pub hp: HyperParams,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    pub layout: MatcherLayout,
}

#[derive(Serialize, Deserialize)]
struct ModelMetadata {
    kind: String,
    hyper_params: HyperParams,
    vocabulary: Vocabulary,
}

impl MatcherModel {
    /// Xavier-initialized model seeded from `hp.seed`.
    pub fn new(hp: HyperParams, vocab: Vocabulary) -> Result<Self> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut params = ParamSet::new();
        let layout = MatcherLayout::init(&mut params, &hp, vocab.len(), &mut rng)?;
        Ok(MatcherModel {
            hp,
            vocab,
            params,
            layout,
        })
    }

    pub fn batch(&self, pairs: &[PairRef<'_>]) -> Result<Batch> {
        Batch::new(&self.hp, self.vocab.len(), pairs)
    }

    /// Matching probabilities, computed in minibatches of `hp.batch_size`.
    pub fn score_pairs(&self, pairs: &[PairRef<'_>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.hp.batch_size) {
            let batch = self.batch(chunk)?;
            let mut tape = Tape::new();
            let logits = forward_logits(&mut tape, &self.params, &self.layout, &self.hp, &batch)?;
            out.extend(tape.value(logits).data().iter().map(|&x| sigmoid(x)));
        }
        Ok(out)
    }

    /// Encodes raw text and scores each response against one context.
    pub fn score_texts(&self, context: &[String], responses: &[String]) -> Result<Vec<f64>> {
        if responses.is_empty() {
            return Ok(Vec::new());
        }
        let ctx = super::data::encode_context(&self.vocab, context, self.hp.max_utterances, self.hp.max_tokens);
        if ctx.iter().all(|u| u.is_empty()) {
            return Err(Error::Scoring("context has no known-token utterance".into()));
        }
        let encoded: Vec<Vec<usize>> = responses
            .iter()
            .map(|r| super::data::encode_utterance(&self.vocab, r, self.hp.max_tokens))
            .collect();
        let pairs: Vec<PairRef<'_>> = encoded
            .iter()
            .map(|r| PairRef {
                context: &ctx,
                response: r,
            })
            .collect();
        self.score_pairs(&pairs)
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
            serde_json::from_value(meta).map_err(|e| Error::Model(format!("bad matcher manifest: {e}")))?;
        if meta.kind != MODEL_KIND {
            return Err(Error::Model(format!("expected a matcher model, found {:?}", meta.kind)));
        }
        meta.hyper_params.validate()?;
        let layout = MatcherLayout::find(&params, &meta.hyper_params)?;
        if params.value(layout.embedding).shape()[0] != meta.vocabulary.len() {
            return Err(Error::Model("embedding rows differ from vocabulary size".into()));
        }
        Ok(MatcherModel {
            hp: meta.hyper_params,
            vocab: meta.vocabulary,
            params,
            layout,
        })
    }

    /// Overwrites embedding rows from a whitespace-separated text file of
    /// `token v1 v2 ...` lines. Unknown tokens are skipped. Returns the
    /// number of rows replaced.
    pub fn import_embeddings(&mut self, text: &str) -> Result<usize> {
        let dim = self.hp.embed_dim;
        let mut replaced = 0;
        for (n, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::DataLine {
                    line: n + 1,
                    message: e.to_string(),
                })?;
            if values.len() != dim {
                return Err(Error::DataLine {
                    line: n + 1,
                    message: format!("expected {dim} values, found {}", values.len()),
                });
            }
            let id = self.vocab.id(token);
            if self.vocab.token(id) != Some(token) {
                continue;
            }
            self.params.value_mut(self.layout.embedding).data_mut()[id * dim..(id + 1) * dim]
                .copy_from_slice(&values);
            replaced += 1;
        }
        Ok(replaced)
    }
}
