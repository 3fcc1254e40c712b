use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opspam::config::{self, FeatureSpec, ModelKind, RunConfig};
use opspam::corpus::{self, Polarity};
use opspam::neural::gradcheck;
use opspam::neural::Architecture;
use opspam::pipeline::{self, ModelParams, Prediction, Predictor, SavedModel};
use opspam::reproduce;
use opspam::textprep::{self, PipelineConfig};

#[derive(Parser)]
#[command(name = "opspam", version, about = "Deceptive opinion spam classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count documents by label, polarity and source.
    CorpusStats(CorpusStatsArgs),
    /// Write a small synthetic corpus in the on-disk layout.
    Fixture(FixtureArgs),
    /// Train on the configured split and report held-out metrics.
    Train(TrainArgs),
    /// Score a saved model on a corpus.
    Evaluate(EvaluateArgs),
    /// Classify new text with a saved model.
    Predict(PredictArgs),
    /// Finite-difference check of the neural gradients.
    Gradcheck(GradcheckArgs),
    /// Re-run one of the published result tables.
    Reproduce(ReproduceArgs),
    /// Show attention weights of an attention model.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus root directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_polarity)]
    polarity: Option<Polarity>,
    /// Override a config value, e.g. `--set sgd.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<toml::Table>,
}

#[derive(Args)]
struct CorpusStatsArgs {
    root: PathBuf,
    #[arg(long, value_parser = parse_polarity)]
    polarity: Option<Polarity>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FixtureArgs {
    out: PathBuf,
    /// Reviews per polarity and class.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write a matching embedding file of this dimension to `<out>/embeddings.txt`.
    #[arg(long)]
    embedding_dim: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Feature set such as tfidf-word, count-ngram or tfidf-char.
    #[arg(long, value_parser = parse_features)]
    features: Option<FeatureSpec>,
    /// Embedding file in GloVe text format (neural models).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Seed for the split, the optimizer and initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for model.json, report.json and history.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    model_file: PathBuf,
    /// Corpus root; the saved split settings pick the held-out part.
    #[arg(long)]
    corpus: PathBuf,
    /// Score every document instead of the held-out split.
    #[arg(long)]
    all: bool,
    /// Write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InputArgs {
    model_file: PathBuf,
    /// Text to classify. Repeatable.
    #[arg(long)]
    text: Vec<String>,
    /// File holding one document; `-` reads standard input.
    #[arg(long)]
    file: Vec<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    input: InputArgs,
    /// One JSON object per line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Show only the highest-weighted tokens.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(value_parser = parse_arch)]
    architecture: Architecture,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value_t = 6)]
    len: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long)]
    json: bool,
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Table number: 1, 2 or 3.
    #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
    table: u8,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    glove50: Option<PathBuf>,
    #[arg(long)]
    glove100: Option<PathBuf>,
    /// Comma-separated seeds replacing the preset's.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated row keys to run, e.g. `lstm,bilstm-attn`.
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<String>>,
    /// Write the comparison JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    allow_fixture: bool,
}

enum Failure {
    Usage(String),
    Run(opspam::Error),
}

impl From<opspam::Error> for Failure {
    fn from(e: opspam::Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn parse_polarity(s: &str) -> Result<Polarity, String> {
    s.parse().map_err(|e: opspam::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: opspam::Error| e.to_string())
}

fn parse_features(s: &str) -> Result<FeatureSpec, String> {
    s.parse().map_err(|e: opspam::Error| e.to_string())
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: opspam::Error| e.to_string())
}

fn parse_override(s: &str) -> Result<toml::Table, String> {
    config::parse_override(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::CorpusStats(a) => corpus_stats(a),
        Command::Fixture(a) => fixture(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Reproduce(a) => run_reproduce(a),
        Command::Explain(a) => explain(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn base_config(a: &ConfigArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &a.overrides {
        cfg = cfg.merged(o).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(root) = &a.corpus {
        cfg.corpus.root = Some(root.clone());
    }
    if a.polarity.is_some() {
        cfg.corpus.polarity = a.polarity;
    }
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(|e| opspam::Error::parse("json", e))?;
    std::fs::write(path, s + "\n").map_err(|e| opspam::Error::io(path, e))?;
    Ok(())
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[usize], p: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn corpus_stats(a: CorpusStatsArgs) -> CmdResult {
    let docs = corpus::filter_polarity(corpus::load_corpus(&a.root)?, a.polarity);
    let mut cells: BTreeMap<String, usize> = BTreeMap::new();
    let mut hotels = std::collections::BTreeSet::new();
    let tok_cfg = PipelineConfig {
        remove_stopwords: false,
        stem: false,
        ..PipelineConfig::default()
    };
    let mut lengths: Vec<usize> = docs
        .iter()
        .map(|d| {
            *cells
                .entry(format!("{}/{}/{}", d.polarity, d.label, d.source))
                .or_default() += 1;
            hotels.insert(d.hotel.clone());
            textprep::preprocess(&d.text, &tok_cfg).len()
        })
        .collect();
    lengths.sort_unstable();
    let pct: Vec<(u32, usize)> = [10, 25, 50, 75, 90, 100]
        .iter()
        .map(|&p| (p, percentile(&lengths, f64::from(p))))
        .collect();
    if a.json {
        let v = serde_json::json!({
            "root": a.root,
            "documents": docs.len(),
            "cells": cells,
            "hotels": hotels.len(),
            "token_length_percentiles": pct
                .iter()
                .map(|(p, v)| serde_json::json!({"percentile": p, "tokens": v}))
                .collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
    } else {
        println!("{} documents in {}", docs.len(), a.root.display());
        for (cell, n) in &cells {
            println!("  {cell:<40} {n:>5}");
        }
        println!("hotels: {}", hotels.len());
        let p: Vec<String> = pct.iter().map(|(k, v)| format!("p{k}={v}")).collect();
        println!("tokens per review: {}", p.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

fn fixture(a: FixtureArgs) -> CmdResult {
    corpus::make_fixture(a.n, a.seed, &a.out)?;
    eprintln!("wrote {} reviews to {}", 4 * a.n, a.out.display());
    if let Some(dim) = a.embedding_dim {
        let p = a.out.join("embeddings.txt");
        corpus::write_fixture_embeddings(&p, dim, a.seed)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn train(a: TrainArgs) -> CmdResult {
    let mut cfg = base_config(&a.cfg)?;
    if let Some(m) = a.model {
        cfg.model.kind = m;
    }
    if let Some(f) = a.features {
        cfg.features.weighting = f.weighting;
        cfg.features.analyzer = f.analyzer;
    }
    if let Some(e) = a.embeddings {
        cfg.embeddings.path = Some(e);
    }
    if let Some(s) = a.seed {
        cfg.split.seed = s;
        cfg.sgd.seed = s;
        cfg.train.seed = s;
    }
    if let Some(o) = a.out {
        cfg.output.dir = o;
    }
    let out = pipeline::train_and_evaluate(&cfg)?;
    let paths = pipeline::write_outputs(&out, &cfg.output.dir)?;
    print!("{}", out.report.to_table());
    println!("train accuracy {:.4}", out.train_accuracy);
    eprintln!("wrote {}", paths.model.display());
    eprintln!("wrote {}", paths.report.display());
    if let Some(h) = paths.history {
        eprintln!("wrote {}", h.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn evaluate(a: EvaluateArgs) -> CmdResult {
    let predictor = Predictor::load(&a.model_file)?;
    let m = predictor.model();
    let docs = corpus::filter_polarity(corpus::load_corpus(&a.corpus)?, m.corpus_polarity);
    let docs = if a.all {
        docs
    } else {
        corpus::split(&docs, m.split.train_fraction, m.split.seed)?.test
    };
    let report = predictor.evaluate(&docs)?;
    print!("{}", report.to_table());
    if let Some(p) = a.out {
        write_json(&p, &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn read_inputs(a: &InputArgs) -> Result<Vec<String>, Failure> {
    let mut texts = a.text.clone();
    for f in &a.file {
        let s = if f.as_os_str() == "-" {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| opspam::Error::io(f, e))?;
            s
        } else {
            std::fs::read_to_string(f).map_err(|e| opspam::Error::io(f, e))?
        };
        texts.push(s);
    }
    if texts.is_empty() {
        return Err(Failure::Usage("give --text or --file".into()));
    }
    Ok(texts)
}

fn run_predictions(input: &InputArgs) -> Result<(SavedModel, Vec<Prediction>), Failure> {
    let texts = read_inputs(input)?;
    let predictor = Predictor::load(&input.model_file)?;
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let preds = predictor.predict(&refs)?;
    for (i, p) in preds.iter().enumerate() {
        if p.n_features == 0 {
            eprintln!("warning: input {} vectorized to an empty document; label comes from the prior", i + 1);
        }
    }
    Ok((predictor.model().clone(), preds))
}

fn score_kind(m: &SavedModel) -> &'static str {
    match m.params {
        ModelParams::Mnb(_) => "log-odds",
        ModelParams::Linear(_) => "decision",
        ModelParams::Neural(_) => "probability",
    }
}

fn predict(a: PredictArgs) -> CmdResult {
    let (model, preds) = run_predictions(&a.input)?;
    for p in &preds {
        if a.json {
            println!("{}", serde_json::to_string(p).map_err(|e| opspam::Error::parse("json", e))?);
            continue;
        }
        println!("{}\t{} {:.6}", p.label, score_kind(&model), p.score);
        if let Some(att) = &p.attention {
            let parts: Vec<String> = att.iter().map(|(t, w)| format!("{t}:{w:.4}")).collect();
            println!("\t{}", parts.join(" "));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn explain(a: ExplainArgs) -> CmdResult {
    let (model, preds) = run_predictions(&a.input)?;
    if model.model_type != ModelKind::Neural(Architecture::BiLstmAttention) {
        return Err(Failure::Run(opspam::Error::WrongArchitecture(format!(
            "explain needs a bilstm-attn model, got {}",
            model.model_type.name()
        ))));
    }
    for (i, p) in preds.iter().enumerate() {
        println!("input {}: {} (p={:.4})", i + 1, p.label, p.score);
        let mut att = p.attention.clone().unwrap_or_default();
        if let Some(k) = a.top {
            att.sort_by(|x, y| y.1.total_cmp(&x.1));
            att.truncate(k);
        }
        for (t, w) in att {
            println!("  {w:.4}  {t}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gradcheck(a: GradcheckArgs) -> CmdResult {
    if a.hidden == 0 || a.len == 0 {
        return Err(Failure::Usage("--hidden and --len must be at least 1".into()));
    }
    let p = gradcheck::small_problem(a.architecture, a.hidden, a.len, a.seed)?;
    let r = gradcheck::check_gradients(&p.spec, &p.params, &p.table, &p.batch, a.epsilon, a.tolerance, a.corrupt)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r).map_err(|e| opspam::Error::parse("json", e))?);
    } else {
        println!("gradcheck {} (epsilon {}, tolerance {})", r.architecture.name(), r.epsilon, r.tolerance);
        for g in &r.groups {
            println!("  {:<16} {:>6} values  max rel err {:.3e}", g.name, g.checked, g.max_rel_error);
        }
        println!("{} max rel err {:.3e}", if r.passed { "PASS" } else { "FAIL" }, r.max_rel_error);
    }
    Ok(if r.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_reproduce(a: ReproduceArgs) -> CmdResult {
    let base = base_config(&a.cfg)?;
    let mut embeddings = BTreeMap::new();
    if let Some(p) = a.glove50 {
        embeddings.insert("glove50".to_string(), p);
    }
    if let Some(p) = a.glove100 {
        embeddings.insert("glove100".to_string(), p);
    }
    let opts = reproduce::Options {
        base,
        embeddings,
        seeds: a.seeds,
        rows: a.rows,
        allow_fixture: a.allow_fixture,
    };
    let cmp = reproduce::reproduce(a.table, &opts)?;
    print!("{}", cmp.to_table());
    if let Some(p) = a.out {
        write_json(&p, &cmp)?;
    }
    Ok(if cmp.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
