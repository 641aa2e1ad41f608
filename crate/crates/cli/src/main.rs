//! `qexp`: build expansion datasets, train and run the expander, evaluate it.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! fault.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qexp_core::error::ErrorClass;

/// Version of every JSON document written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "qexp", version, about = "Sequence-to-sequence query expansion toolkit")]
pub struct Cli {
    /// Numeric precision of model code.
    #[arg(long, global = true, value_enum, default_value_t = PrecisionMode::Test64)]
    pub precision: PrecisionMode,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionMode {
    /// 64-bit floats.
    Test64,
    /// 32-bit floats.
    Fast32,
}

/// A checkpoint path, or `random:SEED` for randomly initialised weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Random(u64),
    Path(PathBuf),
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("random:") {
            Some(seed) => seed
                .parse()
                .map(Source::Random)
                .map_err(|_| format!("bad seed in {s:?}; expected random:<integer>")),
            None => Ok(Source::Path(PathBuf::from(s))),
        }
    }
}

/// Shape of a randomly initialised encoder.
#[derive(Args, Debug, Clone)]
pub struct RandomEncoderArgs {
    /// Hidden units per direction.
    #[arg(long, default_value_t = 500)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Embedding width when no vectors file is given.
    #[arg(long, default_value_t = 300)]
    pub emb_dim: usize,
    /// Pretrained word vectors (`word v1 … vD` per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Turn sentence pairs into source → keyword-expansion examples.
    BuildDataset {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        encoder: Source,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[command(flatten)]
        random: RandomEncoderArgs,
    },
    /// Print the ranked keywords of a sentence.
    Keywords {
        #[arg(long)]
        encoder: Source,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 10)]
        max_k: usize,
        #[command(flatten)]
        random: RandomEncoderArgs,
    },
    /// Train the expansion model.
    Train(TrainArgs),
    /// Expand one query or a file of queries, one output line per query.
    Expand {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "queries")]
        query: Option<String>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        max_steps: usize,
    },
    /// Build an inverted index from JSONL documents.
    Index {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean average precision with and without expansion.
    EvalIr {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value = "bm25")]
        scheme: String,
        #[arg(long)]
        expander: Option<PathBuf>,
        /// Depth of each ranked list.
        #[arg(long, default_value_t = 1000)]
        depth: usize,
    },
    /// Answer preselection accuracy and coverage at k.
    EvalPreselect {
        #[arg(long)]
        sets: PathBuf,
        #[arg(long)]
        expander: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Per-question denominator.
        #[arg(long, value_enum, default_value_t = NormArg::MinK)]
        normalization: NormArg,
    },
    /// Train a linear classifier and report test accuracy.
    EvalClassify {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        expander: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference check of the full model's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long, default_value_t = 24)]
        vocab: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    /// min(k, number of candidates).
    MinK,
    /// Number of relevant candidates.
    Relevant,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Word vectors file, or `random:SEED`.
    #[arg(long)]
    pub embeddings: Source,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub decay: f64,
    #[arg(long, default_value_t = 0.35)]
    pub dropout: f64,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 500)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding width for `random:SEED` embeddings.
    #[arg(long, default_value_t = 300)]
    pub emb_dim: usize,
    /// Minimum token frequency for the vocabulary.
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
    /// Vocabulary size cap, specials included.
    #[arg(long, default_value_t = 50_000)]
    pub max_vocab: usize,
}

/// Marks an error as a usage mistake (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Marks a failed check (exit code 3).
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 3;
    }
    match err.downcast_ref::<qexp_core::Error>().map(|e| e.class()) {
        Some(ErrorClass::Numeric) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
