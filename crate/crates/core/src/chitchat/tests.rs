use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::{check_gradients, GradcheckConfig};

fn pair(q: &str, r: &str) -> ChatPair {
    ChatPair {
        query: q.into(),
        reply: r.into(),
    }
}

fn sample() -> Vec<ChatPair> {
    read_pairs(SAMPLE_PAIRS.as_bytes()).unwrap()
}

fn tiny_hp() -> ChatHyperParams {
    ChatHyperParams {
        embed_dim: 6,
        hidden_dim: 8,
        batch_size: 8,
        epochs: 1,
        ..ChatHyperParams::default()
    }
}

/// Random model with unit-scale weights, so the output distribution is far
/// from uniform.
pub(crate) fn random_model(seed: u64) -> Seq2SeqModel {
    let vocab = ChatVocab::build(&sample(), 1);
    let mut model = Seq2SeqModel::new(ChatHyperParams { seed, ..tiny_hp() }, vocab).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    for id in ids {
        for v in model.params.value_mut(id).data_mut() {
            *v = rng.gen_range(-1.5..1.5);
        }
    }
    model
}

#[test]
fn vocabulary_reserves_the_special_ids() {
    let v = ChatVocab::build(&sample(), 1);
    assert_eq!(&v.tokens()[..4], ["<pad>", "<unk>", "<bos>", "<eos>"]);
    assert_eq!(v.id("never-seen"), UNK);
    let json = serde_json::to_string(&v).unwrap();
    assert_eq!(serde_json::from_str::<ChatVocab>(&json).unwrap(), v);
    assert!(serde_json::from_str::<ChatVocab>(r#"["a","b"]"#).is_err());
}

#[test]
fn detokenize_attaches_punctuation() {
    let toks = chat_tokens("hello , world ! it's fine .");
    assert_eq!(detokenize(&toks), "Hello, world! it's fine.");
    assert_eq!(detokenize(&[]), "");
}

#[test]
fn duplicates_are_dropped() {
    let pairs = vec![pair("Hi", "Hello."), pair("hi", "hello ."), pair("hi", "hey")];
    assert_eq!(dedup_pairs(&pairs).len(), 2);
}

#[test]
fn canned_rotation_cycles() {
    let chat = ChitChat::new(None, DecodeConfig::default(), vec!["a".into(), "b".into()]).unwrap();
    assert!(!chat.model_loaded());
    let got: Vec<String> = (0..5).map(|_| chat.reply("anything")).collect();
    assert_eq!(got, ["a", "b", "a", "b", "a"]);
    let one = ChitChat::new(None, DecodeConfig::default(), vec!["Sorry, could you rephrase?".into()]).unwrap();
    assert_eq!(one.reply("x"), "Sorry, could you rephrase?");
    assert!(ChitChat::new(None, DecodeConfig::default(), vec![]).is_err());
    assert!(parse_canned("# only a comment\n\n").is_err());
    assert_eq!(default_canned().len(), 3);
}

#[test]
fn empty_corpus_is_rejected() {
    assert!(matches!(train_seq2seq(&[], tiny_hp(), |_, _| {}), Err(Error::Training(_))));
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let hp = ChatHyperParams {
        learning_rate: 0.0,
        epochs: 2,
        ..tiny_hp()
    };
    let pairs = sample();
    let model = Seq2SeqModel::new(hp, ChatVocab::build(&pairs, 1)).unwrap();
    let before = model.params.clone();
    let (after, history) = train_model(model, &pairs, |_, _| {}).unwrap();
    for ((_, a), (_, b)) in before.iter().zip(after.params.iter()) {
        assert_eq!(a.value, b.value);
    }
    assert!((history[0] - history[1]).abs() < 1e-12);
}

#[test]
fn initial_loss_is_close_to_uniform() {
    let pairs = sample();
    let model = Seq2SeqModel::new(ChatHyperParams::default(), ChatVocab::build(&pairs, 1)).unwrap();
    let loss = model.mean_loss(&pairs).unwrap();
    let uniform = (model.vocab.len() as f64).ln();
    assert!((loss - uniform).abs() / uniform < 0.2, "{loss} vs ln|V| = {uniform}");
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let pairs = vec![pair("hi there", "hello !"), pair("thanks", "you are welcome")];
    let mut model = Seq2SeqModel::new(tiny_hp(), ChatVocab::build(&pairs, 1)).unwrap();
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for id in ids {
        for v in model.params.value_mut(id).data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let batch = vec![
        (model.encode_query("hi there"), model.vocab.encode("hello !")),
        (model.encode_query("thanks"), model.vocab.encode("you are welcome")),
    ];
    let report = check_gradients(&model.params, GradcheckConfig::default(), |tape, params| {
        let m = Seq2SeqModel {
            params: params.clone(),
            ..model.clone()
        };
        m.batch_loss(tape, &batch)
    })
    .unwrap();
    assert!(report.passed(), "{:?}", report.worst());
}

#[test]
fn single_pair_is_memorized() {
    let pairs = vec![pair("what is your name?", "i am a product assistant.")];
    let hp = ChatHyperParams {
        epochs: 60,
        learning_rate: 0.02,
        ..ChatHyperParams::default()
    };
    let (model, history) = train_seq2seq(&pairs, hp, |_, _| {}).unwrap();
    assert!(history.last().unwrap() < &history[0]);
    let greedy = generate_text(&model, "what is your name?", &DecodeConfig::default()).unwrap();
    assert_eq!(greedy, "I am a product assistant.");
    let chat = ChitChat::new(Some(model), DecodeConfig::default(), default_canned()).unwrap();
    assert_eq!(chat.reply("what is your name?"), "I am a product assistant.");
}

#[test]
fn max_len_one_gives_one_token() {
    let model = random_model(3);
    let cfg = DecodeConfig {
        max_len: 1,
        ..DecodeConfig::default()
    };
    assert_eq!(decode(&model, "hello", &cfg).unwrap().len(), 1);
    let beam = DecodeConfig {
        strategy: DecodeStrategy::Beam { width: 3 },
        max_len: 1,
    };
    assert_eq!(decode(&model, "hello", &beam).unwrap().len(), 1);
}

#[test]
fn beam_of_one_is_greedy_and_tokens_are_valid() {
    for seed in 0..20 {
        let model = random_model(seed);
        for query in ["hello", "what can you do?", "zzz unknown words"] {
            let g = greedy_decode(&model, query, 20).unwrap();
            assert_eq!(g, greedy_decode(&model, query, 20).unwrap());
            assert_eq!(g, beam_decode(&model, query, 1, 20).unwrap(), "seed {seed} {query:?}");
            let wide = beam_decode(&model, query, 4, 20).unwrap();
            for id in g.iter().chain(&wide) {
                assert!(*id < model.vocab.len() && *id != PAD && *id != BOS);
            }
        }
    }
}

#[test]
fn save_load_round_trip() {
    let model = random_model(8);
    let bytes = model.to_bytes().unwrap();
    let back = Seq2SeqModel::from_bytes(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let cfg = DecodeConfig::default();
    assert_eq!(generate_text(&back, "hi", &cfg).unwrap(), generate_text(&model, "hi", &cfg).unwrap());
}

#[test]
fn decode_config_serializes_flat() {
    let cfg = DecodeConfig {
        strategy: DecodeStrategy::Beam { width: 3 },
        max_len: 12,
    };
    let json = serde_json::to_value(cfg).unwrap();
    assert_eq!(json, serde_json::json!({"strategy": "beam", "width": 3, "max_len": 12}));
    assert!(DecodeConfig { max_len: 0, ..cfg }.validate().is_err());
}
