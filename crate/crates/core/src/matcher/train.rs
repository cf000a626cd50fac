use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{encode_context, encode_example, encode_utterance, group_candidates, DialogueExample, EncodedExample};
use super::hyper::HyperParams;
use super::metrics::{recall_at_k, EvalReport};
use super::model::{batch_loss, MatcherModel, PairRef};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::tensor::{Optimizer, OptimizerConfig, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_recall_at_1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: Option<usize>,
}

/// Candidate groups of an evaluation file, encoded once.
#[derive(Debug, Clone)]
pub struct EncodedEvalSet {
    pub n: usize,
    contexts: Vec<Vec<Vec<usize>>>,
    candidates: Vec<Vec<(Vec<usize>, bool)>>,
}

impl EncodedEvalSet {
    pub fn new(model: &MatcherModel, examples: &[DialogueExample], n: usize) -> Result<Self> {
        let hp = &model.hp;
        let mut contexts = Vec::new();
        let mut candidates = Vec::new();
        for group in group_candidates(examples, n)? {
            contexts.push(encode_context(&model.vocab, &group[0].context, hp.max_utterances, hp.max_tokens));
            candidates.push(
                group
                    .iter()
                    .map(|ex| (encode_utterance(&model.vocab, &ex.response, hp.max_tokens), ex.label == 1))
                    .collect(),
            );
        }
        Ok(EncodedEvalSet { n, contexts, candidates })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn evaluate(&self, model: &MatcherModel, ks: &[usize]) -> Result<EvalReport> {
        let pairs: Vec<PairRef<'_>> = self
            .contexts
            .iter()
            .zip(&self.candidates)
            .flat_map(|(ctx, cands)| {
                cands.iter().map(move |(r, _)| PairRef {
                    context: ctx,
                    response: r,
                })
            })
            .collect();
        let scores = model.score_pairs(&pairs)?;
        let per_context: Vec<(Vec<f64>, Vec<bool>)> = scores
            .chunks(self.n)
            .zip(&self.candidates)
            .map(|(s, c)| (s.to_vec(), c.iter().map(|(_, l)| *l).collect()))
            .collect();
        recall_at_k(&per_context, ks)
    }
}

/// Scores every candidate group with an arbitrary scorer `(context,
/// responses) -> scores` and reports `R_n@k`.
pub fn evaluate_with<F>(examples: &[DialogueExample], n: usize, ks: &[usize], mut scorer: F) -> Result<EvalReport>
where
    F: FnMut(&[String], &[String]) -> Result<Vec<f64>>,
{
    let mut per_context = Vec::new();
    for group in group_candidates(examples, n)? {
        let responses: Vec<String> = group.iter().map(|ex| ex.response.clone()).collect();
        let scores = scorer(&group[0].context, &responses)?;
        if scores.len() != responses.len() {
            return Err(Error::Evaluation("scorer returned the wrong number of scores".into()));
        }
        per_context.push((scores, group.iter().map(|ex| ex.label == 1).collect()));
    }
    recall_at_k(&per_context, ks)
}

pub fn evaluate_model(model: &MatcherModel, examples: &[DialogueExample], n: usize, ks: &[usize]) -> Result<EvalReport> {
    EncodedEvalSet::new(model, examples, n)?.evaluate(model, ks)
}

/// Vocabulary over every context utterance and response of a training set.
pub fn build_vocabulary(examples: &[DialogueExample], min_freq: usize) -> Vocabulary {
    Vocabulary::build(
        examples
            .iter()
            .flat_map(|ex| ex.context.iter().map(String::as_str).chain([ex.response.as_str()])),
        min_freq,
    )
}

pub fn encode_examples(model: &MatcherModel, examples: &[DialogueExample]) -> Vec<EncodedExample> {
    examples
        .iter()
        .map(|ex| encode_example(&model.vocab, ex, model.hp.max_utterances, model.hp.max_tokens))
        .collect()
}

fn batch_mean_loss(model: &MatcherModel, chunk: &[&EncodedExample]) -> Result<(f64, Tape, crate::tensor::Var)> {
    let pairs: Vec<PairRef<'_>> = chunk
        .iter()
        .map(|ex| PairRef {
            context: &ex.context,
            response: &ex.response,
        })
        .collect();
    let labels: Vec<f64> = chunk.iter().map(|ex| ex.label as f64).collect();
    let batch = model.batch(&pairs)?;
    let mut tape = Tape::new();
    let loss = batch_loss(&mut tape, &model.params, &model.layout, &model.hp, &batch, &labels)?;
    Ok((tape.value(loss).item(), tape, loss))
}

/// Mean binary cross-entropy over `examples` without updating anything.
pub fn mean_loss(model: &MatcherModel, examples: &[EncodedExample]) -> Result<f64> {
    let mut total = 0.0;
    let refs: Vec<&EncodedExample> = examples.iter().collect();
    for chunk in refs.chunks(model.hp.batch_size) {
        total += batch_mean_loss(model, chunk)?.0 * chunk.len() as f64;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Builds a vocabulary, initializes a model and trains it. See
/// [`train_model`].
pub fn train_matcher(
    train: &[DialogueExample],
    valid: Option<(&[DialogueExample], usize)>,
    hp: HyperParams,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(MatcherModel, TrainHistory)> {
    hp.validate()?;
    let vocab = build_vocabulary(train, hp.min_token_freq);
    let model = MatcherModel::new(hp, vocab)?;
    train_model(model, train, valid, on_epoch)
}

/// Adam on shuffled minibatches. With a validation set (examples grouped by
/// `n`), stops after `patience` epochs without a better `R_n@1` and returns
/// the best-scoring parameters.
pub fn train_model(
    mut model: MatcherModel,
    train: &[DialogueExample],
    valid: Option<(&[DialogueExample], usize)>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(MatcherModel, TrainHistory)> {
    let hp = model.hp.clone();
    let positives = train.iter().filter(|ex| ex.label == 1).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::Training("training data must contain both labels".into()));
    }
    let encoded = encode_examples(&model, train);
    let valid_set = match valid {
        Some((examples, n)) => Some(EncodedEvalSet::new(&model, examples, n)?),
        None => None,
    };
    let mut optimizer = Optimizer::new(OptimizerConfig {
        clip_norm: Some(hp.clip_norm),
        ..OptimizerConfig::adam(hp.learning_rate)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, crate::tensor::ParamSet)> = None;
    let mut stale = 0;

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &encoded[i]).collect();
            let (loss, tape, var) = batch_mean_loss(&model, &batch)?;
            let grads = tape.backward(var)?;
            model.params.accumulate(&grads);
            optimizer.step(&mut model.params)?;
            total += loss * chunk.len() as f64;
        }
        let valid_r1 = match &valid_set {
            Some(set) => Some(set.evaluate(&model, &[1])?.recall(1).unwrap_or(0.0)),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: total / encoded.len() as f64,
            valid_recall_at_1: valid_r1,
        };
        on_epoch(&record);
        history.epochs.push(record);
        if let Some(r1) = valid_r1 {
            if best.as_ref().is_none_or(|(b, _)| r1 > *b) {
                best = Some((r1, model.params.clone()));
                history.best_epoch = Some(epoch);
                stale = 0;
            } else {
                stale += 1;
                if stale >= hp.patience {
                    break;
                }
            }
        }
    }
    match best {
        Some((_, params)) => model.params = params,
        None => history.best_epoch = history.epochs.last().map(|r| r.epoch),
    }
    Ok((model, history))
}
