//! Benchmark harness: runs a question set through each execution variant
//! over several seeds and reports accuracy, inference time and call counts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::LlmClient;
use crate::embedding::{fnv1a64, Embedder};
use crate::error::{Error, Result};
use crate::orchestrator::{execute_dag, execute_fcg, execute_single, ExecConfig, ExecutionTrace, Selection};
use crate::profiling::{select_model, ModelPool, ModelPoolEntry, ProfileStore};
use crate::router::{generate_sdag, load_checkpoint, GenerateConfig, RouterParams};
use crate::subject::{build_ground_truth_dag, QuestionRecord, SDag, Subject};

pub const REPORT_VERSION: u64 = 1;
pub const DEFAULT_GT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Router graph, profiled model per node.
    Sdag,
    /// Router nodes, fully connected, two rounds.
    Fcg,
    /// Annotation-derived graph, profiled model per node.
    NoGnn,
    /// Router graph, uniformly random model per node.
    RandomModel,
    /// One call with the chain-of-thought prompt.
    SingleCot,
}

impl EvalMode {
    pub const ALL: [EvalMode; 5] = [
        EvalMode::Sdag,
        EvalMode::Fcg,
        EvalMode::NoGnn,
        EvalMode::RandomModel,
        EvalMode::SingleCot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Sdag => "sdag",
            EvalMode::Fcg => "fcg",
            EvalMode::NoGnn => "no_gnn",
            EvalMode::RandomModel => "random_model",
            EvalMode::SingleCot => "single_cot",
        }
    }

    /// Row label in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            EvalMode::Sdag => "S-DAG (w/ GNN, profiled model)",
            EvalMode::Fcg => "FCG (fully connected)",
            EvalMode::NoGnn => "w/o GNN",
            EvalMode::RandomModel => "w/ GNN, random model",
            EvalMode::SingleCot => "single-model CoT",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode `{s}`")))
    }

    fn needs_router(self, fcg_source: GraphSource) -> bool {
        match self {
            EvalMode::Sdag | EvalMode::RandomModel => true,
            EvalMode::Fcg => fcg_source == GraphSource::Router,
            EvalMode::NoGnn | EvalMode::SingleCot => false,
        }
    }

    fn needs_profiles(self) -> bool {
        matches!(self, EvalMode::Sdag | EvalMode::Fcg | EvalMode::NoGnn)
    }

    fn needs_annotations(self, fcg_source: GraphSource) -> bool {
        match self {
            EvalMode::NoGnn => true,
            EvalMode::Fcg => fcg_source == GraphSource::Annotation,
            _ => false,
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the fully connected baseline takes its nodes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    #[default]
    Router,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub modes: Vec<EvalMode>,
    pub seeds: Vec<u64>,
    /// Questions evaluated concurrently.
    pub parallelism: usize,
    pub exec: ExecConfig,
    pub generate: GenerateConfig,
    pub gt_threshold: f64,
    pub fcg_source: GraphSource,
    /// Model for the single-model baseline; defaults to the first pool id.
    pub single_model: Option<String>,
    pub include_traces: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            modes: vec![EvalMode::Sdag],
            seeds: vec![0, 1, 2],
            parallelism: 4,
            exec: ExecConfig::default(),
            generate: GenerateConfig::default(),
            gt_threshold: DEFAULT_GT_THRESHOLD,
            fcg_source: GraphSource::Router,
            single_model: None,
            include_traces: true,
        }
    }
}

/// A trained router ready for inference.
pub struct Router {
    pub params: RouterParams,
    pub embedder: Box<dyn Embedder>,
}

impl Router {
    pub fn new(params: RouterParams) -> Result<Self> {
        let embedder = params.embedder.build()?;
        Ok(Self { params, embedder })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(load_checkpoint(path)?)
    }

    pub fn route(&self, question: &QuestionRecord, cfg: &GenerateConfig) -> Result<SDag> {
        generate_sdag(&question.prompt_text(), &self.params, self.embedder.as_ref(), cfg)
    }
}

/// Everything a run needs besides the questions.
pub struct EvalContext {
    pub pool: ModelPool,
    pub client: LlmClient,
    pub router: Option<Router>,
    pub profiles: Option<ProfileStore>,
}

impl EvalContext {
    pub fn new(pool: ModelPool) -> Result<Self> {
        let client = pool.client()?;
        Ok(Self {
            pool,
            client,
            router: None,
            profiles: None,
        })
    }

    pub fn with_router(mut self, router: Router) -> Self {
        self.router = Some(router);
        self
    }

    pub fn with_profiles(mut self, profiles: ProfileStore) -> Self {
        self.profiles = Some(profiles);
        self
    }
}

/// File locations for [`evaluate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalPaths {
    pub data: PathBuf,
    pub pool: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub question_id: String,
    pub correct: bool,
    pub answer: Option<String>,
    pub nodes: Vec<Subject>,
    pub calls: u64,
    pub time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ExecutionTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Percent correct.
    pub accuracy: f64,
    /// Calls summed over the question traces.
    pub calls: u64,
    /// Calls seen by the backend counter; equals `calls`.
    pub counted_calls: u64,
    pub outcomes: Vec<QuestionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: EvalMode,
    pub questions: usize,
    /// Mean over seeds, percent.
    pub accuracy_mean: f64,
    /// Sample standard deviation over seeds, percent.
    pub accuracy_std: f64,
    /// Mean inference time per question, seconds.
    pub avg_time_s: f64,
    /// Mean calls per question.
    pub avg_calls: f64,
    pub seeds: Vec<SeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u64,
    pub modes: BTreeMap<EvalMode, ModeReport>,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn check_inputs(cfg: &EvalConfig, ctx: &EvalContext, questions: &[QuestionRecord]) -> Result<()> {
    if questions.is_empty() {
        return Err(Error::EmptySplit("evaluation".into()));
    }
    if cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one mode and one seed are required".into()));
    }
    ctx.pool.check()?;
    for mode in &cfg.modes {
        if mode.needs_router(cfg.fcg_source) && ctx.router.is_none() {
            return Err(Error::InvalidConfig(format!("mode {mode} needs a router checkpoint")));
        }
        if mode.needs_profiles() {
            let store = ctx
                .profiles
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig(format!("mode {mode} needs capability profiles")))?;
            for id in store.profiles.keys() {
                if ctx.pool.entry(id).is_none() {
                    return Err(Error::InvalidConfig(format!("profiled model `{id}` is not in the pool")));
                }
            }
        }
        if mode.needs_annotations(cfg.fcg_source) {
            for q in questions {
                if !q.subjects.as_ref().is_some_and(|w| w.is_finalized()) {
                    return Err(Error::InvalidDataset(format!(
                        "{}: mode {mode} needs finalized subject annotations",
                        q.id
                    )));
                }
            }
        }
    }
    if let Some(id) = &cfg.single_model {
        if ctx.pool.entry(id).is_none() {
            return Err(Error::InvalidConfig(format!("single model `{id}` is not in the pool")));
        }
    }
    Ok(())
}

fn profiled_selection(subjects: &[Subject], ctx: &EvalContext) -> Result<Selection> {
    let store = ctx.profiles.as_ref().expect("checked before the run");
    subjects
        .iter()
        .map(|s| {
            let id = select_model(*s, store)?;
            let entry = ctx.pool.entry(&id).expect("checked before the run").clone();
            Ok((*s, entry))
        })
        .collect()
}

fn random_selection(subjects: &[Subject], pool: &ModelPool, seed: u64, question_id: &str) -> Selection {
    let mut models: Vec<&ModelPoolEntry> = pool.models.iter().collect();
    models.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    subjects
        .iter()
        .map(|s| {
            let key = format!("{seed}\u{0}{question_id}\u{0}{}", s.name());
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(key.as_bytes()));
            (*s, (*models.choose(&mut rng).expect("pool is non-empty")).clone())
        })
        .collect()
}

fn annotation_dag(q: &QuestionRecord, threshold: f64) -> Result<SDag> {
    let weights = q.subjects.as_ref().expect("checked before the run");
    build_ground_truth_dag(weights, threshold)
}

fn run_question(
    mode: EvalMode,
    q: &QuestionRecord,
    seed: u64,
    cfg: &EvalConfig,
    ctx: &EvalContext,
    client: &LlmClient,
) -> Result<ExecutionTrace> {
    let router_dag = || {
        ctx.router
            .as_ref()
            .expect("checked before the run")
            .route(q, &cfg.generate)
    };
    match mode {
        EvalMode::Sdag => {
            let g = router_dag()?;
            execute_dag(&g, q, &profiled_selection(&g.subjects(), ctx)?, client, &cfg.exec)
        }
        EvalMode::NoGnn => {
            let g = annotation_dag(q, cfg.gt_threshold)?;
            execute_dag(&g, q, &profiled_selection(&g.subjects(), ctx)?, client, &cfg.exec)
        }
        EvalMode::RandomModel => {
            let g = router_dag()?;
            execute_dag(&g, q, &random_selection(&g.subjects(), &ctx.pool, seed, &q.id), client, &cfg.exec)
        }
        EvalMode::Fcg => {
            let g = match cfg.fcg_source {
                GraphSource::Router => router_dag()?,
                GraphSource::Annotation => annotation_dag(q, cfg.gt_threshold)?,
            };
            let nodes: Vec<(Subject, f64)> = g.nodes.iter().map(|n| (n.subject, n.score)).collect();
            execute_fcg(&nodes, q, &profiled_selection(&g.subjects(), ctx)?, client, &cfg.exec)
        }
        EvalMode::SingleCot => {
            let id = match &cfg.single_model {
                Some(id) => id.clone(),
                None => ctx.pool.model_ids().into_iter().next().ok_or(Error::EmptyPool)?,
            };
            let model = ctx.pool.entry(&id).expect("checked before the run");
            let subject = q
                .subjects
                .as_ref()
                .and_then(|w| w.dominant())
                .unwrap_or(Subject::Other);
            Ok(execute_single(q, subject, model, client))
        }
    }
}

fn run_seed(
    mode: EvalMode,
    seed: u64,
    questions: &[QuestionRecord],
    cfg: &EvalConfig,
    ctx: &EvalContext,
) -> Result<SeedResult> {
    let client = ctx.client.for_run(seed);
    let mut traces = Vec::with_capacity(questions.len());
    for chunk in questions.chunks(cfg.parallelism.max(1)) {
        let part: Vec<Result<ExecutionTrace>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|q| {
                    let client = &client;
                    scope.spawn(move || run_question(mode, q, seed, cfg, ctx, client))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        });
        for t in part {
            traces.push(t?);
        }
    }

    let outcomes: Vec<QuestionOutcome> = questions
        .iter()
        .zip(traces)
        .map(|(q, t)| {
            let correct = t.final_answer.as_deref() == Some(q.gold.as_str());
            if t.records.iter().any(|r| r.failed) {
                log::warn!("{mode} seed {seed}: {} had failed agent calls", q.id);
            }
            let mut nodes: Vec<Subject> = t.records.iter().map(|r| r.subject).collect();
            nodes.sort();
            nodes.dedup();
            QuestionOutcome {
                question_id: q.id.clone(),
                correct,
                answer: t.final_answer.clone(),
                nodes,
                calls: t.calls,
                time_ms: t.total_ms,
                trace: cfg.include_traces.then_some(t),
            }
        })
        .collect();
    let correct = outcomes.iter().filter(|o| o.correct).count();
    Ok(SeedResult {
        seed,
        accuracy: 100.0 * correct as f64 / questions.len() as f64,
        calls: outcomes.iter().map(|o| o.calls).sum(),
        counted_calls: client.counter().total(),
        outcomes,
    })
}

/// Runs every configured mode over every seed.
pub fn evaluate_with(cfg: &EvalConfig, ctx: &EvalContext, questions: &[QuestionRecord]) -> Result<EvalReport> {
    check_inputs(cfg, ctx, questions)?;
    let mut modes = BTreeMap::new();
    for mode in &cfg.modes {
        let seeds = cfg
            .seeds
            .iter()
            .map(|s| run_seed(*mode, *s, questions, cfg, ctx))
            .collect::<Result<Vec<_>>>()?;
        let accuracies: Vec<f64> = seeds.iter().map(|s| s.accuracy).collect();
        let instances = (seeds.len() * questions.len()) as f64;
        let total_calls: u64 = seeds.iter().map(|s| s.calls).sum();
        let total_ms: f64 = seeds
            .iter()
            .flat_map(|s| s.outcomes.iter().map(|o| o.time_ms))
            .sum();
        modes.insert(
            *mode,
            ModeReport {
                mode: *mode,
                questions: questions.len(),
                accuracy_mean: mean(&accuracies),
                accuracy_std: sample_std(&accuracies),
                avg_time_s: total_ms / 1000.0 / instances,
                avg_calls: total_calls as f64 / instances,
                seeds,
            },
        );
    }
    Ok(EvalReport {
        version: REPORT_VERSION,
        modes,
    })
}

/// Loads the artifacts named in `paths`, then runs [`evaluate_with`].
pub fn evaluate(cfg: &EvalConfig, paths: &EvalPaths) -> Result<EvalReport> {
    let questions: Vec<QuestionRecord> = crate::io::read_jsonl(&paths.data)?;
    crate::subject::check_dataset(&questions)?;
    let mut ctx = EvalContext::new(ModelPool::load(&paths.pool)?)?;
    if let Some(path) = &paths.checkpoint {
        ctx = ctx.with_router(Router::load(path)?);
    }
    if let Some(path) = &paths.profiles {
        ctx = ctx.with_profiles(ProfileStore::load(path)?);
    }
    evaluate_with(cfg, &ctx, &questions)
}

/// `0.5973` → `"59.73"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("evaluation report", e))
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Text => render_table(report),
    }
}

fn render_table(report: &EvalReport) -> String {
    let header = ["Variant", "Accuracy", "Inf. Time", "#LLM Calls"];
    let mut rows: Vec<[String; 4]> = vec![header.map(String::from)];
    for m in report.modes.values() {
        rows.push([
            m.mode.label().to_string(),
            format!("{:.2} ± {:.2}", m.accuracy_mean, m.accuracy_std),
            format!("{:.2}s", m.avg_time_s),
            format!("{:.2}", m.avg_calls),
        ]);
    }
    let mut widths = [0usize; 4];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (i, (cell, w)) in row.iter().zip(widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let pad = w - cell.chars().count();
            if i == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
