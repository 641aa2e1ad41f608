use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use log::{info, warn};
use serde_json::{json, Value};

use qexp_core::dataset::{self, BuildOptions, PairFormat};
use qexp_core::encoder::SentenceEncoder;
use qexp_core::eval::{
    self, class_accuracy, mean_average_precision, paired_ttest, preselect, read_docs, read_labeled, read_qrels,
    read_queries, read_sets, search, ClassifierConfig, InvertedIndex, LinearClassifier, Normalization,
    QueryExpander, Scheme,
};
use qexp_core::seq2seq::{full_model_gradient_check, log_to_csv, ModelConfig, Seq2Seq, TrainConfig};
use qexp_core::text::{load_embeddings, tokenize, EmbeddingTable, StopwordSet, Vocabulary};
use qexp_core::Scalar;

use crate::{CheckFailed, Cli, Command, NormArg, PrecisionMode, RandomEncoderArgs, Source, TrainArgs, UsageError,
    SCHEMA_VERSION};

pub fn run(cli: Cli) -> Result<()> {
    match cli.precision {
        PrecisionMode::Test64 => run_with::<f64>(cli.command),
        PrecisionMode::Fast32 => run_with::<f32>(cli.command),
    }
}

fn run_with<S: Scalar>(command: Command) -> Result<()> {
    match command {
        Command::BuildDataset {
            pairs,
            format,
            encoder,
            out,
            stats,
            random,
        } => build_dataset::<S>(&pairs, &format, &encoder, &out, &stats, &random),
        Command::Keywords {
            encoder,
            text,
            max_k,
            random,
        } => keywords::<S>(&encoder, &text, max_k, &random),
        Command::Train(args) => train::<S>(&args),
        Command::Expand {
            model,
            query,
            queries,
            max_steps,
        } => expand::<S>(&model, query, queries.as_deref(), max_steps),
        Command::Index { docs, out } => {
            let index = InvertedIndex::build(read_docs(&docs)?)?;
            index.save(&out)?;
            info!("indexed {} documents", index.n_docs());
            Ok(())
        }
        Command::EvalIr {
            index,
            queries,
            qrels,
            scheme,
            expander,
            depth,
        } => eval_ir::<S>(&index, &queries, &qrels, &scheme, expander.as_deref(), depth),
        Command::EvalPreselect {
            sets,
            expander,
            k,
            normalization,
        } => eval_preselect::<S>(&sets, expander.as_deref(), k, normalization),
        Command::EvalClassify {
            train,
            test,
            expander,
            epochs,
            lr,
            seed,
        } => eval_classify::<S>(&train, &test, expander.as_deref(), epochs, lr, seed),
        Command::Gradcheck { hidden, vocab, seed } => gradcheck(hidden, vocab, seed),
    }
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values always serialise"));
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Loads an encoder checkpoint or builds a random one over `vocab_corpus`.
fn load_encoder<S: Scalar>(
    source: &Source,
    random: &RandomEncoderArgs,
    vocab_corpus: &[Vec<String>],
) -> Result<SentenceEncoder<S>> {
    match source {
        Source::Path(p) => Ok(SentenceEncoder::load(p)?),
        Source::Random(seed) => {
            let vocab = Vocabulary::build(vocab_corpus.iter().map(Vec::as_slice), 1, usize::MAX)?;
            let emb = match &random.embeddings {
                Some(p) => load_embeddings(p, &vocab, *seed)?,
                None => EmbeddingTable::random(&vocab, random.emb_dim, *seed),
            };
            Ok(SentenceEncoder::random(vocab, emb, random.hidden, random.layers, *seed)?)
        }
    }
}

fn build_dataset<S: Scalar>(
    pairs: &Path,
    format: &str,
    encoder: &Source,
    out: &Path,
    stats_path: &Path,
    random: &RandomEncoderArgs,
) -> Result<()> {
    let format: PairFormat = format.parse().map_err(UsageError)?;
    let ingested = dataset::ingest(pairs, format)?;
    let corpus: Vec<Vec<String>> = ingested
        .pairs
        .iter()
        .flat_map(|p| [tokenize(&p.text_a), tokenize(&p.text_b)])
        .collect();
    let enc = load_encoder::<S>(encoder, random, &corpus)?;
    let (examples, stats) =
        dataset::build(&ingested.pairs, &enc.view(), &StopwordSet::english(), BuildOptions::default())?;
    dataset::write_examples(&examples, out)?;
    let mut doc = serde_json::to_value(&stats)?;
    doc["schema_version"] = json!(SCHEMA_VERSION);
    doc["rejected_records"] = json!(ingested.rejected);
    write_json(stats_path, &doc)?;
    info!("{} examples from {} pairs", stats.examples_out, stats.pairs_in);
    Ok(())
}

fn keywords<S: Scalar>(encoder: &Source, text: &str, max_k: usize, random: &RandomEncoderArgs) -> Result<()> {
    let tokens = tokenize(text);
    let enc = load_encoder::<S>(encoder, random, std::slice::from_ref(&tokens))?;
    for k in enc.view().extract_keywords(&tokens, &StopwordSet::english(), max_k)? {
        println!("{}\t{}", k.token, k.count);
    }
    Ok(())
}

fn train<S: Scalar>(a: &TrainArgs) -> Result<()> {
    let data = dataset::read_examples(&a.data)?;
    let corpus: Vec<Vec<String>> = data.iter().flat_map(|e| [e.source.clone(), e.expansion.clone()]).collect();
    let vocab = Vocabulary::build(corpus.iter().map(Vec::as_slice), a.min_freq, a.max_vocab)?;
    let emb: EmbeddingTable<S> = match &a.embeddings {
        Source::Random(seed) => EmbeddingTable::random(&vocab, a.emb_dim, *seed),
        Source::Path(p) => load_embeddings(p, &vocab, a.seed)?,
    };
    let config = ModelConfig::uniform(emb.dim(), a.hidden, a.layers);
    let cfg = TrainConfig {
        batch_size: a.batch,
        lr0: a.lr,
        decay: a.decay,
        dropout: a.dropout,
        epochs: a.epochs,
        clip_norm: a.clip,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut model = Seq2Seq::new(config, vocab, emb, a.seed)?;
    info!(
        "training on {} examples, vocabulary {}, {} parameters",
        data.len(),
        model.vocab.len(),
        model.store.num_scalars()
    );
    let log = model.train(&data, &cfg, |e| {
        info!("epoch {} loss {:.6} accuracy {:.4} lr {}", e.epoch, e.loss, e.token_accuracy, e.lr)
    })?;
    fs::write(&a.log, log_to_csv(&log)).with_context(|| format!("writing {}", a.log.display()))?;
    model.save(&a.out)?;
    Ok(())
}

fn expand<S: Scalar>(model: &Path, query: Option<String>, queries: Option<&Path>, max_steps: usize) -> Result<()> {
    let lines: Vec<String> = match (query, queries) {
        (Some(q), None) => vec![q],
        (None, Some(p)) => fs::read_to_string(p)
            .map_err(|e| qexp_core::Error::io(p, e))?
            .lines()
            .map(str::to_string)
            .collect(),
        _ => return Err(UsageError("give exactly one of --query or --queries".into()).into()),
    };
    let model = Seq2Seq::<S>::load(model)?;
    for q in &lines {
        let terms = if tokenize(q).is_empty() {
            Vec::new()
        } else {
            model.expand(q, max_steps)?.expansion
        };
        println!("{}", terms.join(" "));
    }
    Ok(())
}

fn load_expander<S: Scalar>(path: Option<&Path>) -> Result<Option<Seq2Seq<S>>> {
    Ok(match path {
        Some(p) => Some(Seq2Seq::<S>::load(p)?),
        None => None,
    })
}

fn eval_ir<S: Scalar>(
    index: &Path,
    queries: &Path,
    qrels: &Path,
    scheme: &str,
    expander: Option<&Path>,
    depth: usize,
) -> Result<()> {
    let scheme: Scheme = scheme.parse().map_err(|e: qexp_core::Error| UsageError(e.to_string()))?;
    let index = InvertedIndex::load(index)?;
    let queries = read_queries(queries)?;
    let qrels = read_qrels(qrels)?;
    let expander = load_expander::<S>(expander)?;

    let run = |expander: Option<&dyn QueryExpander>| -> Result<Vec<eval::RankedList>> {
        queries
            .iter()
            .map(|(qid, text)| Ok(search(&index, qid, &eval::maybe_expand(expander, text)?, scheme, depth)?))
            .collect()
    };
    let base = mean_average_precision(&run(None)?, &qrels)?;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "metric": "map",
        "scheme": scheme.to_string(),
        "n": base.per_query.len(),
        "skipped": base.skipped,
        "value": base.map,
    });
    if let Some(model) = &expander {
        let qe = mean_average_precision(&run(Some(model))?, &qrels)?;
        let with: Vec<f64> = base.per_query.keys().map(|q| qe.per_query.get(q).copied().unwrap_or(0.0)).collect();
        let without: Vec<f64> = base.per_query.values().copied().collect();
        doc["value_with_qe"] = json!(qe.map);
        match paired_ttest(&with, &without) {
            Ok(t) => {
                doc["t"] = json!(t.t);
                doc["p_value"] = json!(t.p);
            }
            Err(e) => {
                warn!("paired t-test unavailable: {e}");
                doc["t"] = Value::Null;
                doc["p_value"] = Value::Null;
            }
        }
    }
    print_json(&doc);
    Ok(())
}

fn eval_preselect<S: Scalar>(sets: &Path, expander: Option<&Path>, k: usize, norm: NormArg) -> Result<()> {
    let sets = read_sets(sets)?;
    let expander = load_expander::<S>(expander)?;
    let (normalization, name) = match norm {
        NormArg::MinK => (Normalization::MinKCandidates, "min-k"),
        NormArg::Relevant => (Normalization::Relevant, "relevant"),
    };
    let base = preselect(&sets, None, k, normalization)?;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "metric": "preselect",
        "k": k,
        "normalization": name,
        "n": base.n,
        "accuracy": base.accuracy,
        "coverage": base.coverage,
    });
    if let Some(model) = &expander {
        let qe = preselect(&sets, Some(model), k, normalization)?;
        doc["accuracy_with_qe"] = json!(qe.accuracy);
        doc["coverage_with_qe"] = json!(qe.coverage);
    }
    print_json(&doc);
    Ok(())
}

fn eval_classify<S: Scalar>(
    train: &Path,
    test: &Path,
    expander: Option<&Path>,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<()> {
    let train = read_labeled(train)?;
    let test = read_labeled(test)?;
    let expander = load_expander::<S>(expander)?;
    let texts: Vec<&str> = train.iter().map(|(_, t)| t.as_str()).collect();
    let labels: Vec<&str> = train.iter().map(|(l, _)| l.as_str()).collect();
    let cfg = ClassifierConfig {
        epochs,
        lr,
        seed,
        ..ClassifierConfig::default()
    };
    let model = LinearClassifier::train(&texts, &labels, cfg)?;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "metric": "accuracy",
        "n": test.len(),
        "classes": model.classes(),
        "value": class_accuracy(&model, &test, None)?,
    });
    if let Some(e) = &expander {
        doc["value_with_qe"] = json!(class_accuracy(&model, &test, Some(e))?);
    }
    print_json(&doc);
    Ok(())
}

/// Always runs in 64-bit: finite differences are meaningless at 32-bit.
fn gradcheck(hidden: usize, vocab: usize, seed: u64) -> Result<()> {
    if hidden == 0 || vocab < 5 {
        return Err(UsageError("gradcheck needs --hidden >= 1 and --vocab >= 5".into()).into());
    }
    let report = full_model_gradient_check(hidden, vocab, seed)?;
    let passed = report.max_rel_error < 1e-4;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "max_rel_error": report.max_rel_error,
        "worst": report.worst.as_ref().map(|(name, i)| json!({"tensor": name, "index": i})),
        "checked": report.checked,
        "passed": passed,
    }));
    if !passed {
        return Err(CheckFailed(format!("max relative error {} is not below 1e-4", report.max_rel_error)).into());
    }
    Ok(())
}
