use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::data::{detokenize, BOS, EOS, PAD, UNK};
use super::model::{Encoded, Seq2SeqModel};
use crate::error::{Error, Result};
use crate::tensor::{BoundGru, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum DecodeStrategy {
    Greedy,
    Beam { width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    #[serde(flatten)]
    pub strategy: DecodeStrategy,
    /// Most tokens generated, not counting `<eos>`.
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    20
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: DecodeStrategy::Greedy,
            max_len: default_max_len(),
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if self.strategy == (DecodeStrategy::Beam { width: 0 }) {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        Ok(())
    }
}

struct Decoder<'m> {
    model: &'m Seq2SeqModel,
    tape: Tape,
    enc: Encoded,
    gru: BoundGru,
    table: Var,
}

impl<'m> Decoder<'m> {
    fn new(model: &'m Seq2SeqModel, query: &str) -> Result<Self> {
        let mut tape = Tape::new();
        let enc = model.encode_sources(&mut tape, &[model.encode_query(query)])?;
        let gru = model.layout.decoder.bind(&mut tape, &model.params);
        let table = tape.param(&model.params, model.layout.embedding);
        Ok(Decoder {
            model,
            tape,
            enc,
            gru,
            table,
        })
    }

    /// Feeds `token`, returning the new state and next-token log-probabilities.
    fn step(&mut self, h: Var, token: usize) -> Result<(Var, Vec<f64>)> {
        let tape = &mut self.tape;
        let x = tape.embedding_lookup(self.table, &[token])?;
        let h = self.gru.step(tape, x, h)?;
        let q = tape.reshape(h, &[1, 1, self.model.hp.hidden_dim])?;
        let logits = self.model.project(tape, &self.enc, q)?;
        let row = tape.value(logits).data();
        let lse = crate::tensor::log_sum_exp(row);
        Ok((h, row.iter().map(|x| x - lse).collect()))
    }
}

/// Whether `id` may be emitted at position `t`. Replies never contain
/// padding, `<bos>` or `<unk>`, and are at least one token long.
fn allowed(id: usize, t: usize) -> bool {
    !matches!(id, PAD | BOS | UNK) && !(t == 0 && id == EOS)
}

/// Highest log-probability token; ties go to the lowest id.
fn best_token(logp: &[f64], t: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (id, &lp) in logp.iter().enumerate() {
        if allowed(id, t) && best.is_none_or(|b| lp > logp[b]) {
            best = Some(id);
        }
    }
    best
}

pub fn greedy_decode(model: &Seq2SeqModel, query: &str, max_len: usize) -> Result<Vec<usize>> {
    let mut dec = Decoder::new(model, query)?;
    let mut h = dec.enc.last;
    let mut prev = BOS;
    let mut out = Vec::new();
    for t in 0..max_len {
        let (next_h, logp) = dec.step(h, prev)?;
        let Some(tok) = best_token(&logp, t) else { break };
        if tok == EOS {
            break;
        }
        out.push(tok);
        h = next_h;
        prev = tok;
    }
    Ok(out)
}

struct Hyp {
    tokens: Vec<usize>,
    score: f64,
    h: Var,
}

/// Beam search on summed log-probabilities without length penalty.
/// Expansions are ranked by total score, then parent order, then the step's
/// own log-probability, then token id, so width 1 follows the greedy path.
pub fn beam_decode(model: &Seq2SeqModel, query: &str, width: usize, max_len: usize) -> Result<Vec<usize>> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let mut dec = Decoder::new(model, query)?;
    let mut alive = vec![Hyp {
        tokens: Vec::new(),
        score: 0.0,
        h: dec.enc.last,
    }];
    let mut finished: Vec<Hyp> = Vec::new();
    for t in 0..max_len {
        // (score, parent, step log-prob, token, new state)
        let mut expansions: Vec<(f64, usize, f64, usize, Var)> = Vec::new();
        for (parent, hyp) in alive.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let (h, logp) = dec.step(hyp.h, prev)?;
            for (id, &lp) in logp.iter().enumerate() {
                if allowed(id, t) {
                    expansions.push((hyp.score + lp, parent, lp, id, h));
                }
            }
        }
        expansions.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(b.2.total_cmp(&a.2))
                .then(a.3.cmp(&b.3))
        });
        let mut next = Vec::new();
        for (score, parent, _, id, h) in expansions.into_iter().take(width) {
            let mut tokens = alive[parent].tokens.clone();
            if id == EOS {
                finished.push(Hyp { tokens, score, h });
            } else {
                tokens.push(id);
                next.push(Hyp { tokens, score, h });
            }
        }
        alive = next;
        if alive.is_empty() || finished.len() >= width {
            break;
        }
    }
    let best = finished
        .into_iter()
        .chain(alive)
        .reduce(|best, h| match h.score.total_cmp(&best.score) {
            Ordering::Greater => h,
            _ => best,
        });
    Ok(best.map(|h| h.tokens).unwrap_or_default())
}

pub fn decode(model: &Seq2SeqModel, query: &str, cfg: &DecodeConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    match cfg.strategy {
        DecodeStrategy::Greedy => greedy_decode(model, query, cfg.max_len),
        DecodeStrategy::Beam { width } => beam_decode(model, query, width, cfg.max_len),
    }
}

/// Decodes and detokenizes.
pub fn generate_text(model: &Seq2SeqModel, query: &str, cfg: &DecodeConfig) -> Result<String> {
    let ids = decode(model, query, cfg)?;
    let tokens: Vec<String> = ids
        .iter()
        .map(|&id| model.vocab.token(id).unwrap_or("").to_string())
        .collect();
    Ok(detokenize(&tokens))
}
