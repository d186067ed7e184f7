//! `sdag`: curate datasets, train the router, profile models, answer
//! questions and run evaluations.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use sdag::backend::{BackendConfig, LlmClient};
use sdag::curation::{curate_dataset, CurateConfig};
use sdag::embedding::EmbedderConfig;
use sdag::eval::{evaluate, render_report, EvalConfig, EvalMode, EvalPaths, GraphSource, ReportFormat, Router};
use sdag::io::{read_jsonl, write_json, write_jsonl};
use sdag::orchestrator::{execute_dag, execute_fcg, ExecConfig};
use sdag::profiling::{run_profiling, select_model, ModelPool, ProfileStore, ProfilingConfig};
use sdag::router::{routing_metrics, samples_from_records, save_checkpoint, train, GenerateConfig, RouterDims, TrainConfig};
use sdag::subject::{QuestionRecord, Split};
use sdag::{Error, Result};

#[derive(Parser)]
#[command(name = "sdag", version, about = "Subject-aware routing and multi-agent orchestration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate raw questions with subjects and split them.
    Curate(CurateArgs),
    /// Train the subject router on annotated questions.
    Train(TrainArgs),
    /// Measure per-subject capability of every pool model.
    Profile(ProfileArgs),
    /// Answer one question with the routed agent pipeline.
    Run(RunArgs),
    /// Evaluate a test split under one or more variants.
    Eval(EvalArgs),
}

#[derive(Args)]
struct CurateArgs {
    /// Raw questions (JSONL).
    #[arg(long)]
    input: PathBuf,
    /// JSON file with a `backends` list; the annotator must be one of them.
    #[arg(long)]
    backends: PathBuf,
    /// Backend used for annotation.
    #[arg(long, default_value = "annotator")]
    annotator: String,
    /// Directory for train/test/profiling JSONL and annotation logs.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    profiling_size: usize,
    #[arg(long, default_value_t = 0.7)]
    train_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw profiling questions from the test split.
    #[arg(long)]
    profiling_from_test: bool,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Annotated training questions (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Optional held-out questions for routing F1.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    lambda_node: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_edge: f64,
    #[arg(long, default_value_t = 64)]
    subject_dim: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    head_hidden: usize,
    /// Width of the hashed question embedding.
    #[arg(long, default_value_t = 256)]
    embed_dim: usize,
    /// Ground-truth weight threshold.
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
}

#[derive(Args)]
struct ProfileArgs {
    /// Profiling questions (JSONL).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunMode {
    Sdag,
    Fcg,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    question: String,
    /// Answer options, lettered A, B, ... in order.
    #[arg(long = "option")]
    options: Vec<String>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, value_enum, default_value = "sdag")]
    mode: RunMode,
    /// Trace output (JSONL).
    #[arg(long, default_value = "trace.jsonl")]
    trace: PathBuf,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Text,
    Json,
}

#[derive(Args)]
struct EvalArgs {
    /// Variant(s) to run: sdag, fcg, no_gnn, random_model, single_cot.
    #[arg(long = "mode", value_delimiter = ',', required = true, value_parser = parse_mode)]
    modes: Vec<EvalMode>,
    /// Test questions (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Number of trials; seeds are 0..N.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    pool: PathBuf,
    /// Report output (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "text")]
    format: CliFormat,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Take FCG nodes from the stored annotations instead of the router.
    #[arg(long)]
    fcg_from_annotations: bool,
    /// Model used by single_cot.
    #[arg(long)]
    single_model: Option<String>,
    /// Leave per-question traces out of the report.
    #[arg(long)]
    no_traces: bool,
}

#[derive(Deserialize)]
struct BackendsFile {
    backends: Vec<BackendConfig>,
}

fn load_backends(path: &Path) -> Result<LlmClient> {
    let mut file: BackendsFile = sdag::io::read_json(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for b in &mut file.backends {
        b.resolve_paths(base);
    }
    Ok(LlmClient::from_configs(&file.backends)?)
}

fn curate(a: CurateArgs) -> Result<()> {
    let raw: Vec<QuestionRecord> = read_jsonl(&a.input)?;
    let client = load_backends(&a.backends)?;
    let cfg = CurateConfig {
        backend: a.annotator,
        profiling_size: a.profiling_size,
        train_ratio: a.train_ratio,
        seed: a.seed,
        profiling_from_test: a.profiling_from_test,
        parallelism: a.parallelism,
    };
    let outcome = curate_dataset(&raw, &client, &cfg)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    for split in [Split::Train, Split::Test, Split::Profiling] {
        let records: Vec<QuestionRecord> = outcome.dataset.split(split).cloned().collect();
        write_jsonl(&a.out_dir.join(format!("{}.jsonl", split.name())), &records)?;
    }
    write_jsonl(&a.out_dir.join("annotations.jsonl"), &outcome.runs)?;
    write_jsonl(&a.out_dir.join("skipped.jsonl"), &outcome.skipped)?;
    write_json(&a.out_dir.join("stats.json"), &outcome.dataset.stats)?;
    let s = &outcome.dataset.stats;
    println!(
        "train {}, test {}, profiling {} ({:.2} subjects per question); skipped {} of {} questions",
        s.train,
        s.test,
        s.profiling,
        s.avg_subjects,
        outcome.skipped.len(),
        raw.len()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let records: Vec<QuestionRecord> = read_jsonl(&a.data)?;
    let samples = samples_from_records(&records, a.threshold)?;
    let embedder = EmbedderConfig::Hashed { dim: a.embed_dim };
    let cfg = TrainConfig {
        dims: RouterDims {
            subject_dim: a.subject_dim,
            question_dim: a.embed_dim,
            hidden: a.hidden,
            layers: a.layers,
            head_hidden: a.head_hidden,
            ..RouterDims::default()
        },
        lambda_node: a.lambda_node,
        lambda_edge: a.lambda_edge,
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let outcome = train(&samples, &cfg, &embedder)?;
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  loss {l:.6}", e + 1);
    }
    save_checkpoint(&outcome.params, &a.out)?;
    if let Some(path) = a.heldout {
        let heldout = samples_from_records(&read_jsonl(&path)?, a.threshold)?;
        let m = routing_metrics(&heldout, &outcome.params, embedder.build()?.as_ref(), &GenerateConfig::default())?;
        println!(
            "held-out node F1 {:.4}  edge F1 {:.4}  exact {}/{}",
            m.node_f1(),
            m.edge_f1(),
            m.exact,
            m.samples
        );
    }
    Ok(())
}

fn profile(a: ProfileArgs) -> Result<()> {
    let questions: Vec<QuestionRecord> = read_jsonl(&a.data)?;
    let pool = ModelPool::load(&a.pool)?;
    let client = pool.client()?;
    let cfg = ProfilingConfig {
        seed: a.seed,
        parallelism: a.parallelism,
    };
    let outcome = run_profiling(&pool, &questions, &client, &cfg)?;
    outcome.store.save(&a.out)?;
    let p = &outcome.store.provenance;
    println!(
        "profiled {} models on {} questions: {} calls, {} errors",
        outcome.store.profiles.len(),
        p.questions,
        p.calls,
        p.errors
    );
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let question = QuestionRecord {
        id: "cli".into(),
        question: a.question,
        options: a.options,
        gold: String::new(),
        subjects: None,
        split: None,
    };
    let router = Router::load(&a.checkpoint)?;
    let store = ProfileStore::load(&a.profiles)?;
    let pool = ModelPool::load(&a.pool)?;
    let client = pool.client()?;
    let g = router.route(&question, &GenerateConfig::default())?;
    let mut selection = std::collections::BTreeMap::new();
    for s in g.subjects() {
        let id = select_model(s, &store)?;
        let entry = pool
            .entry(&id)
            .ok_or_else(|| Error::InvalidConfig(format!("profiled model `{id}` is not in the pool")))?;
        selection.insert(s, entry.clone());
    }
    let exec = ExecConfig {
        parallelism: a.parallelism,
    };
    let trace = match a.mode {
        RunMode::Sdag => execute_dag(&g, &question, &selection, &client, &exec)?,
        RunMode::Fcg => {
            let nodes: Vec<_> = g.nodes.iter().map(|n| (n.subject, n.score)).collect();
            execute_fcg(&nodes, &question, &selection, &client, &exec)?
        }
    };
    trace.write_jsonl(&a.trace)?;
    match &trace.final_answer {
        Some(answer) => println!("{answer}"),
        None => println!("(no answer)"),
    }
    Ok(())
}

fn parse_mode(s: &str) -> std::result::Result<EvalMode, String> {
    EvalMode::parse(s).map_err(|e| e.to_string())
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = EvalConfig {
        modes: a.modes,
        seeds: (0..a.seeds).collect(),
        parallelism: a.parallelism,
        exec: ExecConfig {
            parallelism: a.parallelism,
        },
        fcg_source: if a.fcg_from_annotations {
            GraphSource::Annotation
        } else {
            GraphSource::Router
        },
        single_model: a.single_model,
        include_traces: !a.no_traces,
        ..EvalConfig::default()
    };
    let paths = EvalPaths {
        data: a.data,
        pool: a.pool,
        checkpoint: a.checkpoint,
        profiles: a.profiles,
    };
    let report = evaluate(&cfg, &paths)?;
    if let Some(out) = &a.out {
        std::fs::write(out, report.to_json()).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
    }
    let format = match a.format {
        CliFormat::Text => ReportFormat::Text,
        CliFormat::Json => ReportFormat::Json,
    };
    print!("{}", render_report(&report, format));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Curate(a) => curate(a),
        Command::Train(a) => train_cmd(a),
        Command::Profile(a) => profile(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
