use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use docbot::chitchat::{default_canned, load_pairs, train_seq2seq, ChatHyperParams, ChitChat, DecodeConfig, Seq2SeqModel};
use docbot::dialogue::{DialogueManager, ManagerConfig, Origin, Scorer};
use docbot::docstore::DocStore;
use docbot::gradsuite::run_suite;
use docbot::matcher::{
    evaluate_model, evaluate_with, load_examples, train_matcher, DialogueExample, EvalReport, HyperParams,
    MatcherModel, TfIdfModel,
};
use docbot::synth::{document_training_examples, generate, write_corpus, SynthConfig};
use docbot::tensor::GradcheckConfig;
use docbot::text::TextPipeline;
use docbot_service::ServiceConfig;

use crate::failure::{CmdResult, Failure};
use crate::Command;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Ingest { path, title, data } => ingest(&path, title, &data.data_dir),
        Command::Index { rebuild, data } => index(rebuild, &data.data_dir),
        Command::TrainMatcher {
            data,
            val,
            out,
            no_self_match,
            seed,
            hparams,
            epochs,
            n,
            doc,
            product,
        } => {
            let mut hp: HyperParams = match hparams {
                Some(p) => read_json(&p)?,
                None => HyperParams::desk(),
            };
            if no_self_match {
                hp.self_match_enabled = false;
            }
            if let Some(s) = seed {
                hp.seed = s;
            }
            if let Some(e) = epochs {
                hp.epochs = e;
            }
            hp.validate().map_err(Failure::usage)?;
            train_matcher_cmd(&data, val.as_deref(), &out, hp, n, &doc, product.as_deref())
        }
        Command::TrainChitchat {
            pairs,
            out,
            seed,
            epochs,
            hparams,
        } => {
            let mut hp: ChatHyperParams = match hparams {
                Some(p) => read_json(&p)?,
                None => ChatHyperParams::default(),
            };
            if let Some(s) = seed {
                hp.seed = s;
            }
            if let Some(e) = epochs {
                hp.epochs = e;
            }
            hp.validate().map_err(Failure::usage)?;
            train_chitchat(&pairs, &out, hp)
        }
        Command::Eval {
            model,
            data,
            n,
            k,
            tfidf,
            tfidf_fit,
            oracle,
            random,
            seed,
            json,
        } => {
            let opts = EvalOptions {
                models: model,
                tfidf: tfidf || tfidf_fit.is_some(),
                tfidf_fit,
                oracle,
                random,
                seed,
            };
            eval(&data, n, &k, &opts, json)
        }
        Command::GenData {
            out,
            contexts,
            eval_contexts,
            candidates,
            seed,
        } => gen_data(
            &out,
            SynthConfig {
                train_contexts: contexts,
                eval_contexts: eval_contexts.unwrap_or((contexts / 10).max(1)),
                candidates,
                seed,
            },
        ),
        Command::Chat {
            doc,
            model,
            chitchat_model,
            threshold,
            trace,
        } => chat(&doc, model.as_deref(), chitchat_model.as_deref(), threshold, trace),
        Command::Serve { config } => serve(config.as_deref()),
        Command::Gradcheck => gradcheck(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CmdResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> CmdResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn text_files(path: &Path) -> CmdResult<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt" || x == "md"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::data(format!("{}: no .txt or .md files", path.display())));
    }
    Ok(files)
}

fn ingest(path: &Path, title: Option<String>, data_dir: &Path) -> CmdResult {
    let files = text_files(path)?;
    if title.is_some() && files.len() > 1 {
        return Err(Failure::usage("--title applies to a single file"));
    }
    let store = DocStore::open(data_dir, TextPipeline::default())?;
    for file in files {
        let text = read_text(&file)?;
        let title = title.clone().or_else(|| file.file_stem().map(|s| s.to_string_lossy().into_owned()));
        let doc = store
            .ingest(title, &text)
            .map_err(|e| Failure::data(format!("{}: {e}", file.display())))?;
        println!(
            "{}\t{} sentences\t{} triples\t{}",
            doc.meta.doc_id,
            doc.meta.n_sentences,
            doc.meta.n_triples,
            file.display()
        );
    }
    Ok(())
}

fn index(rebuild: bool, data_dir: &Path) -> CmdResult {
    let store = DocStore::open(data_dir, TextPipeline::default())?;
    if rebuild {
        let n = store.rebuild_indexes()?;
        println!("rebuilt {n} index(es) in {}", data_dir.display());
    }
    for id in store.ids() {
        let doc = store.get(&id).expect("listed id exists");
        println!(
            "{}\t{} sentences\t{} triples\t{}",
            id,
            doc.meta.n_sentences,
            doc.meta.n_triples,
            doc.meta.title.as_deref().unwrap_or("-")
        );
    }
    Ok(())
}

fn doc_examples(path: &Path, product: Option<&str>, seed: u64) -> CmdResult<Vec<DialogueExample>> {
    let text = read_text(path)?;
    let product = match product {
        Some(p) => p.to_string(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    Ok(document_training_examples(&text, &product, 3, seed)?)
}

fn train_matcher_cmd(
    data: &Path,
    val: Option<&Path>,
    out: &Path,
    hp: HyperParams,
    n: usize,
    docs: &[PathBuf],
    product: Option<&str>,
) -> CmdResult {
    let mut train = load_examples(data)?;
    for doc in docs {
        let extra = doc_examples(doc, product, hp.seed)?;
        eprintln!("{}: {} document examples", doc.display(), extra.len());
        train.extend(extra);
    }
    let valid = val.map(load_examples).transpose()?;
    let start = Instant::now();
    let (model, history) = train_matcher(&train, valid.as_deref().map(|v| (v, n)), hp, |r| {
        match r.valid_recall_at_1 {
            Some(v) => eprintln!(
                "epoch {:>3}  loss {:.4}  valid R@1 {:.4}  {:.0}s",
                r.epoch,
                r.train_loss,
                v,
                start.elapsed().as_secs_f64()
            ),
            None => eprintln!(
                "epoch {:>3}  loss {:.4}  {:.0}s",
                r.epoch,
                r.train_loss,
                start.elapsed().as_secs_f64()
            ),
        }
    })
    .map_err(Failure::model)?;
    model.save(out)?;
    println!(
        "saved {} (vocabulary {}, best epoch {})",
        out.display(),
        model.vocab.len(),
        history.best_epoch.map_or("-".into(), |e| e.to_string())
    );
    Ok(())
}

fn train_chitchat(pairs: &Path, out: &Path, hp: ChatHyperParams) -> CmdResult {
    let pairs = load_pairs(pairs)?;
    let start = Instant::now();
    let (model, _) = train_seq2seq(&pairs, hp, |epoch, loss| {
        eprintln!("epoch {epoch:>3}  loss {loss:.4}  {:.0}s", start.elapsed().as_secs_f64());
    })
    .map_err(Failure::model)?;
    model.save(out)?;
    println!("saved {} (vocabulary {})", out.display(), model.vocab.len());
    Ok(())
}

struct EvalOptions {
    models: Vec<PathBuf>,
    tfidf: bool,
    tfidf_fit: Option<PathBuf>,
    oracle: bool,
    random: bool,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct EvalRow {
    name: String,
    recalls: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    n: usize,
    contexts: usize,
    results: Vec<EvalRow>,
}

fn row(name: String, report: &EvalReport) -> EvalRow {
    EvalRow {
        name,
        recalls: report
            .recalls
            .iter()
            .map(|(k, v)| (format!("R{}@{k}", report.n), (v * 1e4).round() / 1e4))
            .collect(),
    }
}

fn eval(data: &Path, n: usize, ks: &[usize], opts: &EvalOptions, json: bool) -> CmdResult {
    if opts.models.is_empty() && !opts.tfidf && !opts.oracle && !opts.random {
        return Err(Failure::usage("nothing to evaluate: give --model, --tfidf, --oracle or --random"));
    }
    let examples = load_examples(data)?;
    let mut results = Vec::new();
    let mut contexts = 0;
    for path in &opts.models {
        let model = MatcherModel::load(path).map_err(Failure::model)?;
        let report = evaluate_model(&model, &examples, n, ks)?;
        contexts = report.num_contexts;
        results.push(row(path.display().to_string(), &report));
    }
    if opts.tfidf {
        let fit = match &opts.tfidf_fit {
            Some(p) => load_examples(p)?,
            None => examples.clone(),
        };
        let tfidf = TfIdfModel::fit(
            fit.iter()
                .flat_map(|e| e.context.iter().map(String::as_str).chain([e.response.as_str()])),
        );
        let report = evaluate_with(&examples, n, ks, |ctx, rs| Ok(rs.iter().map(|r| tfidf.score(ctx, r)).collect()))?;
        contexts = report.num_contexts;
        results.push(row("tfidf".into(), &report));
    }
    if opts.oracle {
        let mut labels = examples.chunks(n).map(|g| g.iter().map(|e| e.label as f64).collect::<Vec<_>>());
        let report = evaluate_with(&examples, n, ks, |_, _| Ok(labels.next().unwrap_or_default()))?;
        contexts = report.num_contexts;
        results.push(row("oracle".into(), &report));
    }
    if opts.random {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let report = evaluate_with(&examples, n, ks, |_, rs| Ok(rs.iter().map(|_| rng.gen::<f64>()).collect()))?;
        contexts = report.num_contexts;
        results.push(row("random".into(), &report));
    }
    let output = EvalOutput { n, contexts, results };
    if json {
        println!("{}", serde_json::to_string_pretty(&output).expect("serializable"));
        return Ok(());
    }
    let width = output.results.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    print!("{:width$}", "model");
    for k in ks {
        print!("  {:>7}", format!("R{n}@{k}"));
    }
    println!();
    for r in &output.results {
        print!("{:width$}", r.name);
        for v in r.recalls.values() {
            print!("  {v:>7.4}");
        }
        println!();
    }
    println!("({contexts} contexts)");
    Ok(())
}

fn gen_data(out: &Path, config: SynthConfig) -> CmdResult {
    let corpus = generate(config).map_err(Failure::usage)?;
    write_corpus(&corpus, out)?;
    println!(
        "wrote {} train, {} valid, {} test examples to {}",
        corpus.train.len(),
        corpus.valid.len(),
        corpus.test.len(),
        out.display()
    );
    Ok(())
}

fn chat(docs: &[PathBuf], model: Option<&Path>, chitchat_model: Option<&Path>, threshold: f64, trace: bool) -> CmdResult {
    let store = Arc::new(DocStore::in_memory(TextPipeline::default()));
    let mut ids = Vec::new();
    for path in docs {
        let text = read_text(path)?;
        let title = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        ids.push(store.ingest(title, &text)?.meta.doc_id.clone());
    }
    let scorer: Option<Arc<dyn Scorer>> = match model {
        Some(p) => Some(Arc::new(MatcherModel::load(p).map_err(Failure::model)?)),
        None => None,
    };
    let seq2seq = chitchat_model
        .map(|p| Seq2SeqModel::load(p).map_err(Failure::model))
        .transpose()?;
    let config = ManagerConfig {
        score_threshold: threshold,
        ..ManagerConfig::default()
    };
    let chitchat = Arc::new(ChitChat::new(seq2seq, DecodeConfig::default(), default_canned())?);
    let manager = DialogueManager::new(store, scorer, chitchat, config)?;
    let session = manager.create_session(ids)?;

    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    for line in stdin.lock().lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "/quit" || text == "/exit" {
            break;
        }
        let d = manager.handle_message(&session.session_id, text)?;
        let tag = match (d.origin, d.score) {
            (Origin::Matched, Some(s)) => format!("matched {s:.2}"),
            (Origin::Chitchat, Some(s)) => format!("chit-chat, best {s:.2}"),
            _ => "chit-chat".into(),
        };
        writeln!(stdout, "bot> {}  [{tag}]", d.reply)?;
        if trace {
            for t in &d.candidate_trace {
                writeln!(stdout, "       {:.3}  {:?}  {}", t.score, t.kind, t.text)?;
            }
        }
        stdout.flush()?;
    }
    Ok(())
}

fn serve(config: Option<&Path>) -> CmdResult {
    let config = match config {
        Some(p) => ServiceConfig::load(p).map_err(Failure::usage)?,
        None => {
            let mut c = ServiceConfig::default();
            c.apply_env(|k| std::env::var(k).ok()).map_err(Failure::usage)?;
            c
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime
        .block_on(docbot_service::serve(config))
        .map_err(|e| Failure::data(format!("{e:#}")))
}

fn gradcheck() -> CmdResult {
    let start = Instant::now();
    let results = run_suite(GradcheckConfig::default()).map_err(Failure::model)?;
    let mut failed = 0;
    for r in &results {
        let ok = r.report.passed();
        failed += usize::from(!ok);
        println!(
            "{}  {:<40} max rel err {:.2e}",
            if ok { "ok  " } else { "FAIL" },
            r.name,
            r.report.max_rel_error()
        );
    }
    println!("{} cases, {failed} failed, {:.1}s", results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        return Err(Failure::model(format!("{failed} gradient check(s) failed")));
    }
    Ok(())
}
