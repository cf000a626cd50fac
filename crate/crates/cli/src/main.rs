//! `docbot`: ingest documents, train and evaluate models, generate the
//! synthetic corpus, chat in a terminal and run the HTTP service.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 model error.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "docbot", version, about = "Document-grounded multi-turn chatbot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataDir {
    /// Directory holding ingested documents and their indexes.
    #[arg(long, env = "DOCBOT_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preprocess, index and store a text file or every .txt/.md file in a directory.
    Ingest {
        path: PathBuf,
        /// Title for a single ingested file.
        #[arg(long)]
        title: Option<String>,
        #[command(flatten)]
        data: DataDir,
    },
    /// List stored documents, or rebuild every index from the stored text.
    Index {
        #[arg(long)]
        rebuild: bool,
        #[command(flatten)]
        data: DataDir,
    },
    /// Train the response matcher on a labelled JSONL file.
    TrainMatcher {
        #[arg(long)]
        data: PathBuf,
        /// Validation file grouped by --n candidates; enables early stopping.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip the self-matching attention block.
        #[arg(long)]
        no_self_match: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file of hyper-parameters; missing keys take the desk defaults.
        #[arg(long)]
        hparams: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Candidates per validation context.
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Product document whose sentences become extra positives for
        /// templated questions about it.
        #[arg(long)]
        doc: Vec<PathBuf>,
        /// Product named in those questions; defaults to the file stem.
        #[arg(long, requires = "doc")]
        product: Option<String>,
    },
    /// Train the chit-chat sequence-to-sequence model.
    TrainChitchat {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// JSON file of hyper-parameters.
        #[arg(long)]
        hparams: Option<PathBuf>,
    },
    /// Report R_n@k for models and baselines on a grouped JSONL file.
    Eval {
        /// Trained matcher; repeat to compare several.
        #[arg(long)]
        model: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
        k: Vec<usize>,
        /// Add the TF-IDF baseline.
        #[arg(long)]
        tfidf: bool,
        /// Fit the TF-IDF statistics on this file instead of --data.
        #[arg(long)]
        tfidf_fit: Option<PathBuf>,
        /// Add a scorer that reads the labels (must reach 1.0).
        #[arg(long)]
        oracle: bool,
        /// Add a uniformly random scorer.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write the synthetic product-QA corpus.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Training contexts.
        #[arg(long, default_value_t = 5000)]
        contexts: usize,
        /// Contexts in each of valid and test; defaults to contexts / 10.
        #[arg(long)]
        eval_contexts: Option<usize>,
        #[arg(long, default_value_t = 10)]
        candidates: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Line-oriented chat over local documents.
    Chat {
        #[arg(long, required = true)]
        doc: Vec<PathBuf>,
        /// Trained matcher; without one every reply is chit-chat.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        chitchat_model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
        /// Print the scored candidates after each reply.
        #[arg(long)]
        trace: bool,
    },
    /// Run the HTTP service.
    Serve {
        /// TOML config; defaults apply without one.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { failure::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.line());
            ExitCode::from(f.code)
        }
    }
}
