//! Finite-difference gradient checks for every differentiable op and layer
//! and for the full matcher and chit-chat losses, at tiny dimensions.
//!
//! Parameters are drawn from U(-1, 1) rather than the training init so that
//! no gradient element is small enough to drown in difference noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chitchat::{ChatHyperParams, ChatPair, ChatVocab, Seq2SeqModel};
use crate::error::Result;
use crate::matcher::{batch_loss, build_vocabulary, encode_examples, DialogueExample, HyperParams, MatcherModel, PairRef};
use crate::tensor::{
    check_gradients, AdditiveAttention, Dense, GradcheckConfig, GradcheckReport, Gru, ParamSet, Tape, Tensor, Var,
};

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub report: GradcheckReport,
}

type Case = fn(GradcheckConfig) -> Result<GradcheckReport>;

const CASES: &[(&str, Case)] = &[
    ("elementwise and reductions", elementwise),
    ("matmul, bmm, transpose", matmul),
    ("concat, stack, select, reshape", shape_ops),
    ("embedding lookup", embedding),
    ("softmax and masked softmax", softmax),
    ("pairwise add", pair_add),
    ("conv2d and maxpool2d", conv_pool),
    ("binary cross-entropy", bce),
    ("cross-entropy", cross_entropy),
    ("dense", dense),
    ("gru step and masked run", gru),
    ("additive attention with gate", attention),
    ("matcher loss", matcher_full),
    ("matcher loss without self-matching", matcher_ablation),
    ("chit-chat loss", seq2seq),
];

pub fn case_names() -> Vec<&'static str> {
    CASES.iter().map(|(n, _)| *n).collect()
}

/// Runs every case and returns the reports in a fixed order.
pub fn run_suite(cfg: GradcheckConfig) -> Result<Vec<SuiteResult>> {
    CASES
        .iter()
        .map(|(name, case)| Ok(SuiteResult { name, report: case(cfg)? }))
        .collect()
}

/// Overwrites every parameter with U(-1, 1) draws.
pub fn randomize_params(params: &mut ParamSet, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    for id in ids {
        for v in params.value_mut(id).data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
}

fn param_set(shapes: &[(&str, &[usize])], seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    for (name, shape) in shapes {
        ps.add(*name, Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)))
            .expect("distinct names");
    }
    ps
}

fn p(t: &mut Tape, ps: &ParamSet, name: &str) -> Result<Var> {
    let id = ps
        .id(name)
        .ok_or_else(|| crate::Error::Model(format!("no parameter {name}")))?;
    Ok(t.param(ps, id))
}

fn elementwise(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(&[("a", &[3, 4]), ("b", &[3, 4]), ("c", &[4])], 11);
    check_gradients(&ps, cfg, |t, ps| {
        let (a, b, c) = (p(t, ps, "a")?, p(t, ps, "b")?, p(t, ps, "c")?);
        let x = t.mul(a, b)?;
        let x = t.add_bias(x, c)?;
        let s = t.sigmoid(x);
        let d = t.sub(s, b)?;
        let h = t.tanh(d);
        let r = t.relu(a);
        let hr = t.add(h, r)?;
        let q = t.mul(hr, hr)?;
        let q = t.scale(q, 0.7);
        let m = t.mean(q);
        let s2 = t.sum(h);
        let s2 = t.scale(s2, 0.1);
        t.add(m, s2)
    })
}

fn matmul(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(&[("a", &[2, 3, 4]), ("b", &[4, 5]), ("c", &[2, 5, 3])], 12);
    check_gradients(&ps, cfg, |t, ps| {
        let (a, b, c) = (p(t, ps, "a")?, p(t, ps, "b")?, p(t, ps, "c")?);
        let ab = t.matmul(a, b)?;
        let abc = t.bmm(ab, c)?;
        let tr = t.transpose(abc)?;
        let prod = t.mul(tr, abc)?;
        let prod = t.tanh(prod);
        Ok(t.sum(prod))
    })
}

fn shape_ops(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(&[("a", &[2, 3]), ("b", &[2, 2]), ("c", &[2, 5])], 13);
    check_gradients(&ps, cfg, |t, ps| {
        let (a, b, c) = (p(t, ps, "a")?, p(t, ps, "b")?, p(t, ps, "c")?);
        let ab = t.concat(&[a, b], 1)?;
        let st = t.stack(&[ab, c, ab], 1)?;
        let st0 = t.stack(&[ab, c], 0)?;
        let s1 = t.select(st, 1, 2)?;
        let s2 = t.select(st0, 0, 1)?;
        let cat0 = t.concat(&[s1, s2], 0)?;
        let r = t.reshape(cat0, &[5, 4])?;
        let r = t.sigmoid(r);
        let w = t.tanh(st);
        let sw = t.sum(w);
        let sr = t.mean(r);
        t.mul(sr, sw)
    })
}

fn embedding(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(&[("e", &[5, 3]), ("w", &[3, 2])], 14);
    check_gradients(&ps, cfg, |t, ps| {
        let (e, w) = (p(t, ps, "e")?, p(t, ps, "w")?);
        let rows = t.embedding_lookup(e, &[4, 0, 4, 2])?;
        let y = t.matmul(rows, w)?;
        let y = t.tanh(y);
        let y = t.mul(y, y)?;
        Ok(t.sum(y))
    })
}

fn softmax(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(&[("x", &[2, 3, 4]), ("w", &[2, 3, 4])], 15);
    let mask: Vec<bool> = (0..24).map(|i| i % 4 != 1 && i < 20).collect();
    check_gradients(&ps, cfg, |t, ps| {
        let (x, w) = (p(t, ps, "x")?, p(t, ps, "w")?);
        let s1 = t.softmax(x, 1)?;
        let s2 = t.masked_softmax(x, 2, Some(&mask))?;
        let a = t.mul(s1, w)?;
        let b = t.mul(s2, w)?;
        let c = t.add(a, b)?;
        let c = t.mul(c, c)?;
        Ok(t.sum(c))
    })
}

fn pair_add(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(&[("a", &[2, 3, 4]), ("b", &[2, 2, 4]), ("v", &[4, 1])], 16);
    check_gradients(&ps, cfg, |t, ps| {
        let (a, b, v) = (p(t, ps, "a")?, p(t, ps, "b")?, p(t, ps, "v")?);
        let s = t.pair_add(a, b)?;
        let s = t.tanh(s);
        let s = t.matmul(s, v)?;
        let s = t.mul(s, s)?;
        Ok(t.sum(s))
    })
}

fn conv_pool(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(
        &[("x", &[2, 2, 5, 4]), ("w", &[3, 2, 3, 3]), ("b", &[3]), ("d", &[12, 2])],
        17,
    );
    check_gradients(&ps, cfg, |t, ps| {
        let (x, w, b, d) = (p(t, ps, "x")?, p(t, ps, "w")?, p(t, ps, "b")?, p(t, ps, "d")?);
        let y = t.conv2d(x, w, b)?;
        let y = t.relu(y);
        let pooled = t.maxpool2d(y, 2, 2)?;
        let f = t.reshape(pooled, &[1, 12])?;
        let f = t.concat(&[f, f], 0)?;
        let o = t.matmul(f, d)?;
        let o = t.tanh(o);
        Ok(t.sum(o))
    })
}

fn bce(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(&[("z", &[6])], 18);
    let targets = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    check_gradients(&ps, cfg, |t, ps| {
        let z = p(t, ps, "z")?;
        let z = t.scale(z, 3.0);
        t.bce_with_logits(z, &targets)
    })
}

fn cross_entropy(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let ps = param_set(&[("l", &[3, 5])], 19);
    check_gradients(&ps, cfg, |t, ps| {
        let l = p(t, ps, "l")?;
        t.cross_entropy(l, &[4, 0, 2], &[1.0, 0.0, 2.0])
    })
}

fn dense(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut ps = ParamSet::new();
    let layer = Dense::new(&mut ps, "dense", 4, 3, true, &mut rng)?;
    ps.add("x", Tensor::zeros(&[2, 5, 4]))?;
    randomize_params(&mut ps, 20);
    check_gradients(&ps, cfg, |t, ps| {
        let x = p(t, ps, "x")?;
        let y = layer.forward(t, ps, x)?;
        let y = t.tanh(y);
        Ok(t.sum(y))
    })
}

fn gru(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut ps = ParamSet::new();
    let gru = Gru::new(&mut ps, "gru", 3, 4, &mut rng)?;
    ps.add("x", Tensor::zeros(&[2, 4, 3]))?;
    ps.add("h", Tensor::zeros(&[2, 4]))?;
    randomize_params(&mut ps, 24);
    let mask = [1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    check_gradients(&ps, cfg, |t, ps| {
        let bound = gru.bind(t, ps);
        let (x, h) = (p(t, ps, "x")?, p(t, ps, "h")?);
        let x0 = t.select(x, 1, 0)?;
        let stepped = bound.step(t, x0, h)?;
        let out = bound.run(t, x, Some(&mask), Some(stepped))?;
        let s = t.tanh(out.states);
        let s = t.sum(s);
        let l = t.sum(out.last);
        t.add(s, l)
    })
}

fn attention(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut ps = ParamSet::new();
    let att = AdditiveAttention::new(&mut ps, "att", 3, 2, 4, &mut rng)?;
    let gate = Dense::new(&mut ps, "gate", 6, 6, true, &mut rng)?;
    ps.add("k", Tensor::zeros(&[2, 4, 3]))?;
    ps.add("q", Tensor::zeros(&[2, 3, 2]))?;
    randomize_params(&mut ps, 33);
    let mask = [true, true, false, true, true, true, true, false];
    check_gradients(&ps, cfg, |t, ps| {
        let bound = att.bind(t, ps);
        let (k, q) = (p(t, ps, "k")?, p(t, ps, "q")?);
        let a = bound.weights(t, k, q, Some(&mask))?;
        let c = bound.context(t, a, k)?;
        let joined = t.concat(&[c, c], 2)?;
        let g = gate.forward(t, ps, joined)?;
        let g = t.sigmoid(g);
        let x = t.mul(g, joined)?;
        Ok(t.sum(x))
    })
}

fn ex(context: &[&str], response: &str, label: u8) -> DialogueExample {
    DialogueExample {
        context: context.iter().map(|s| s.to_string()).collect(),
        response: response.into(),
        label,
    }
}

fn matcher_loss(cfg: GradcheckConfig, self_match: bool) -> Result<GradcheckReport> {
    let data = vec![
        ex(&["hello there", "how heavy is the zenbook"], "it weighs two kilos", 1),
        ex(&["hello there", "how heavy is the zenbook"], "the screen is bright", 0),
        ex(&["what about the screen"], "the screen is bright and sharp", 1),
        ex(&["what about the screen"], "it weighs two kilos", 0),
    ];
    let hp = HyperParams {
        embed_dim: 4,
        hidden_dim: 4,
        max_utterances: 3,
        max_tokens: 5,
        match_dim: 3,
        conv_filters: 2,
        min_token_freq: 1,
        self_match_enabled: self_match,
        ..HyperParams::default()
    };
    let mut model = MatcherModel::new(hp, build_vocabulary(&data, 1))?;
    randomize_params(&mut model.params, 7);
    let encoded = encode_examples(&model, &data);
    let pairs: Vec<PairRef<'_>> = encoded
        .iter()
        .map(|e| PairRef {
            context: &e.context,
            response: &e.response,
        })
        .collect();
    let batch = model.batch(&pairs)?;
    let labels: Vec<f64> = encoded.iter().map(|e| e.label as f64).collect();
    check_gradients(&model.params, cfg, |t, ps| {
        batch_loss(t, ps, &model.layout, &model.hp, &batch, &labels)
    })
}

fn matcher_full(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    matcher_loss(cfg, true)
}

fn matcher_ablation(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    matcher_loss(cfg, false)
}

fn seq2seq(cfg: GradcheckConfig) -> Result<GradcheckReport> {
    let pairs = [("hi there", "hello !"), ("thanks", "you are welcome")].map(|(q, r)| ChatPair {
        query: q.into(),
        reply: r.into(),
    });
    let hp = ChatHyperParams {
        embed_dim: 6,
        hidden_dim: 8,
        ..ChatHyperParams::default()
    };
    let mut model = Seq2SeqModel::new(hp, ChatVocab::build(&pairs, 1))?;
    randomize_params(&mut model.params, 11);
    let batch: Vec<(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .map(|p| (model.encode_query(&p.query), model.vocab.encode(&p.reply)))
        .collect();
    check_gradients(&model.params, cfg, |t, ps| {
        let m = Seq2SeqModel {
            params: ps.clone(),
            ..model.clone()
        };
        m.batch_loss(t, &batch)
    })
}
