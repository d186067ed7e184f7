//! Multi-agent execution of a routed subject graph.
//!
//! Every node is answered by the model selected for its subject. A node sees
//! the question plus the replies of its in-neighbours, so supporting experts
//! feed the dominant one. Nodes whose inputs are ready run concurrently.
//!
//! Timing in traces is a logical clock: a node starts when its last
//! predecessor finishes and takes the latency its backend reports. This
//! keeps traces identical across runs no matter how threads interleave.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatRequest, LlmClient, RequestMeta};
use crate::error::{Error, Result};
use crate::profiling::ModelPoolEntry;
use crate::subject::{QuestionRecord, SDag, Subject};

/// Text substituted for the contribution of a node whose call failed.
pub const UNAVAILABLE: &str = "[unavailable]";

pub const ANSWER_FORMAT_LINE: &str =
    "Your final answer should be with the format: <<answer>>, at the end of your response.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    /// Start node: no incoming edges.
    SubjectExpert,
    /// Intermediate node.
    Supporting,
    /// Sink: no outgoing edges.
    Dominant,
}

impl AgentRole {
    pub fn name(self) -> &'static str {
        match self {
            AgentRole::SubjectExpert => "subject_expert",
            AgentRole::Supporting => "supporting",
            AgentRole::Dominant => "dominant",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn assign_roles(g: &SDag) -> BTreeMap<Subject, AgentRole> {
    g.nodes
        .iter()
        .map(|n| {
            let role = match (g.in_degree(n.subject), g.out_degree(n.subject)) {
                (_, 0) => AgentRole::Dominant,
                (0, _) => AgentRole::SubjectExpert,
                _ => AgentRole::Supporting,
            };
            (n.subject, role)
        })
        .collect()
}

/// The baseline single-model chain-of-thought prompt.
pub fn render_single_model_prompt(question: &str) -> String {
    format!(
        "Can you solve the problem? {question} Explain your reasoning. Your final answer should be with the format: <<answer>>, at the end of your response."
    )
}

/// Renders the prompt for an agent. Upstream replies are listed in
/// canonical subject order. The dominant prompt ends with the answer-format
/// line.
pub fn render_prompt(
    role: AgentRole,
    subject: Subject,
    question: &str,
    upstream: &[(Subject, String)],
) -> Result<String> {
    let mismatch = |detail: &str| Error::RoleInputMismatch {
        role: role.to_string(),
        detail: detail.to_string(),
    };
    let mut upstream: Vec<&(Subject, String)> = upstream.iter().collect();
    upstream.sort_by_key(|(s, _)| *s);
    match role {
        AgentRole::SubjectExpert => {
            if !upstream.is_empty() {
                return Err(mismatch("a subject expert takes no upstream input"));
            }
            Ok(format!(
                "You are an expert in {subject}. Your task is to analyze the following question based on your domain knowledge.\n\
                 Question: {question}\n\
                 Please provide a clear and concise explanation or answer strictly from the perspective of {subject}."
            ))
        }
        AgentRole::Supporting => {
            if upstream.is_empty() {
                return Err(mismatch("a supporting agent needs upstream input"));
            }
            let sources: Vec<&str> = upstream.iter().map(|(s, _)| s.name()).collect();
            let mut out = format!(
                "You are an expert in {subject}. Another agent has provided information from {}, which may be relevant to your reasoning.\n\
                 Question: {question}\n",
                sources.join(", ")
            );
            for (s, content) in &upstream {
                out.push_str(&format!("Supporting Information from {s}: {content}\n"));
            }
            out.push_str(&format!(
                "Please incorporate the above supporting information into your domain-specific reasoning, and produce a coherent, informed response from the perspective of {subject}."
            ));
            Ok(out)
        }
        AgentRole::Dominant => {
            if upstream.is_empty() {
                return Err(mismatch("the dominant agent needs upstream input"));
            }
            let mut out = format!(
                "You are the lead {subject} expert responsible for integrating multi-disciplinary information to answer the following complex question.\n\
                 Question: {question}\n\
                 You have received input from other experts:\n"
            );
            for (s, content) in &upstream {
                out.push_str(&format!("- {s}: {content}\n"));
            }
            out.push_str(
                "Please synthesize the provided information and generate a comprehensive final answer that reflects the reasoning across these domains.\n",
            );
            out.push_str(ANSWER_FORMAT_LINE);
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no answer found in reply")]
pub struct NoAnswer;

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<<(.*?)>>").expect("valid regex"))
}

/// Contents of the last `<<...>>` group, or else the last standalone option
/// letter A–J.
pub fn extract_answer(reply: &str) -> std::result::Result<String, NoAnswer> {
    if let Some(m) = marker_re().captures_iter(reply).last() {
        let inner = m[1].trim();
        if !inner.is_empty() {
            return Ok(inner.to_string());
        }
    }
    let chars: Vec<char> = reply.chars().collect();
    for i in (0..chars.len()).rev() {
        let c = chars[i];
        if !('A'..='J').contains(&c) {
            continue;
        }
        let before = i == 0 || !chars[i - 1].is_alphanumeric();
        let after = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        if before && after {
            return Ok(c.to_string());
        }
    }
    Err(NoAnswer)
}

/// Model chosen for each subject.
pub type Selection = BTreeMap<Subject, ModelPoolEntry>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub subject: Subject,
    /// `None` for the single-model baseline.
    pub role: Option<AgentRole>,
    /// FCG round (1 or 2); absent for graph execution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u8>,
    pub model_id: String,
    pub prompt: String,
    pub reply: String,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub start_ms: f64,
    pub finish_ms: f64,
    pub latency_ms: f64,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Sdag,
    Fcg,
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub question_id: String,
    pub mode: ExecutionMode,
    /// Topological order for graphs; round-major canonical order for FCG.
    pub records: Vec<NodeRecord>,
    /// Logical time from question input to final answer.
    pub total_ms: f64,
    pub calls: u64,
    pub final_node: Subject,
    pub final_answer: Option<String>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine<'a> {
    Node(&'a NodeRecord),
    Summary {
        question_id: &'a str,
        mode: ExecutionMode,
        total_ms: f64,
        calls: u64,
        final_node: Subject,
        final_answer: &'a Option<String>,
    },
}

impl ExecutionTrace {
    /// One line per record, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(&TraceLine::Node(r)).expect("trace serializes"));
            out.push('\n');
        }
        let summary = TraceLine::Summary {
            question_id: &self.question_id,
            mode: self.mode,
            total_ms: self.total_ms,
            calls: self.calls,
            final_node: self.final_node,
            final_answer: &self.final_answer,
        };
        out.push_str(&serde_json::to_string(&summary).expect("trace serializes"));
        out.push('\n');
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn record(&self, subject: Subject) -> Option<&NodeRecord> {
        self.records.iter().find(|r| r.subject == subject)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Upper bound on concurrent calls within one question.
    pub parallelism: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { parallelism: 4 }
    }
}

struct Job {
    subject: Subject,
    role: Option<AgentRole>,
    round: Option<u8>,
    prompt: String,
    start_ms: f64,
}

fn run_job(job: Job, question: &QuestionRecord, model: &ModelPoolEntry, client: &LlmClient) -> NodeRecord {
    let req = ChatRequest::new(&model.backend, job.prompt.clone()).with_meta(RequestMeta {
        question_id: Some(question.id.clone()),
        subject: Some(job.subject),
        role: job.role.map(|r| r.name().to_string()),
        model_id: Some(model.model_id.clone()),
        purpose: Some("agent".into()),
    });
    let (reply, failed, error, latency_ms, attempts) = match client.complete(&req) {
        Ok(resp) => (resp.text, false, None, resp.latency_ms, resp.attempts),
        Err(e) => {
            log::warn!("{} / {} ({}): {e}", question.id, job.subject, model.model_id);
            let attempts = match &e {
                BackendError::Transport { attempts, .. } | BackendError::Timeout { attempts, .. } => *attempts,
                _ => 0,
            };
            (UNAVAILABLE.to_string(), true, Some(e.to_string()), 0.0, attempts)
        }
    };
    NodeRecord {
        subject: job.subject,
        role: job.role,
        round: job.round,
        model_id: model.model_id.clone(),
        prompt: job.prompt,
        reply,
        failed,
        error,
        start_ms: job.start_ms,
        finish_ms: job.start_ms + latency_ms,
        latency_ms,
        attempts,
    }
}

/// Runs a batch of independent jobs, at most `parallelism` at a time.
/// Output order matches input order.
fn run_batch(
    jobs: Vec<Job>,
    question: &QuestionRecord,
    selection: &Selection,
    client: &LlmClient,
    parallelism: usize,
) -> Vec<NodeRecord> {
    let mut out = Vec::with_capacity(jobs.len());
    let mut jobs = jobs.into_iter().peekable();
    while jobs.peek().is_some() {
        let chunk: Vec<Job> = jobs.by_ref().take(parallelism.max(1)).collect();
        if chunk.len() == 1 {
            let job = chunk.into_iter().next().expect("one job");
            let model = &selection[&job.subject];
            out.push(run_job(job, question, model, client));
            continue;
        }
        let part: Vec<NodeRecord> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .into_iter()
                .map(|job| {
                    let model = &selection[&job.subject];
                    scope.spawn(move || run_job(job, question, model, client))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("agent worker panicked")).collect()
        });
        out.extend(part);
    }
    out
}

fn check_selection(subjects: &[Subject], selection: &Selection) -> Result<()> {
    for s in subjects {
        if !selection.contains_key(s) {
            return Err(Error::MissingSelection(s.to_string()));
        }
    }
    Ok(())
}

/// Sink with the highest relevance score; ties go to the canonically first.
pub fn final_node(g: &SDag) -> Option<Subject> {
    let roles = assign_roles(g);
    let mut best: Option<(Subject, f64)> = None;
    let mut sinks: Vec<_> = g
        .nodes
        .iter()
        .filter(|n| roles[&n.subject] == AgentRole::Dominant)
        .collect();
    sinks.sort_by_key(|n| n.subject);
    for n in sinks {
        if best.is_none_or(|(_, b)| n.score > b) {
            best = Some((n.subject, n.score));
        }
    }
    best.map(|(s, _)| s)
}

/// Executes the graph: each node once, after all of its in-neighbours.
pub fn execute_dag(
    g: &SDag,
    question: &QuestionRecord,
    selection: &Selection,
    client: &LlmClient,
    cfg: &ExecConfig,
) -> Result<ExecutionTrace> {
    let order = g
        .topological_order()
        .filter(|o| !o.is_empty())
        .ok_or_else(|| Error::InvalidConfig("graph is empty, cyclic or has dangling edges".into()))?;
    check_selection(&order, selection)?;
    let roles = assign_roles(g);
    let last = final_node(g).expect("a non-empty acyclic graph has a sink");
    let text = question.prompt_text();

    let mut level: BTreeMap<Subject, usize> = BTreeMap::new();
    for s in &order {
        let l = g.predecessors(*s).iter().map(|p| level[p] + 1).max().unwrap_or(0);
        level.insert(*s, l);
    }
    let depth = level.values().max().copied().unwrap_or(0);

    let mut done: BTreeMap<Subject, NodeRecord> = BTreeMap::new();
    for l in 0..=depth {
        let mut jobs = Vec::new();
        for s in order.iter().filter(|s| level[*s] == l) {
            let preds = g.predecessors(*s);
            let upstream: Vec<(Subject, String)> = preds.iter().map(|p| (*p, done[p].reply.clone())).collect();
            let start_ms = preds.iter().map(|p| done[p].finish_ms).fold(0.0, f64::max);
            let role = roles[s];
            let prompt = if upstream.is_empty() {
                let mut p = render_prompt(AgentRole::SubjectExpert, *s, &text, &[])?;
                if role == AgentRole::Dominant {
                    p.push('\n');
                    p.push_str(ANSWER_FORMAT_LINE);
                }
                p
            } else {
                render_prompt(role, *s, &text, &upstream)?
            };
            jobs.push(Job {
                subject: *s,
                role: Some(role),
                round: None,
                prompt,
                start_ms,
            });
        }
        for r in run_batch(jobs, question, selection, client, cfg.parallelism) {
            done.insert(r.subject, r);
        }
    }

    let records: Vec<NodeRecord> = order.iter().map(|s| done.remove(s).expect("every node ran")).collect();
    Ok(finish_trace(question, ExecutionMode::Sdag, records, last))
}

fn finish_trace(question: &QuestionRecord, mode: ExecutionMode, records: Vec<NodeRecord>, last: Subject) -> ExecutionTrace {
    let final_record = records
        .iter()
        .rev()
        .find(|r| r.subject == last)
        .expect("final node has a record");
    let final_answer = if final_record.failed {
        None
    } else {
        extract_answer(&final_record.reply).ok()
    };
    let total_ms = records.iter().map(|r| r.finish_ms).fold(0.0, f64::max);
    ExecutionTrace {
        question_id: question.id.clone(),
        mode,
        calls: records.len() as u64,
        total_ms,
        final_node: last,
        final_answer,
        records,
    }
}

/// Fully connected baseline: every agent answers alone, then every agent
/// revises after reading all peers. `2n` calls.
pub fn execute_fcg(
    nodes: &[(Subject, f64)],
    question: &QuestionRecord,
    selection: &Selection,
    client: &LlmClient,
    cfg: &ExecConfig,
) -> Result<ExecutionTrace> {
    let mut nodes: Vec<(Subject, f64)> = nodes.to_vec();
    nodes.sort_by_key(|(s, _)| *s);
    nodes.dedup_by_key(|(s, _)| *s);
    if nodes.is_empty() {
        return Err(Error::InvalidConfig("fully connected execution needs at least one node".into()));
    }
    let subjects: Vec<Subject> = nodes.iter().map(|(s, _)| *s).collect();
    check_selection(&subjects, selection)?;
    let text = question.prompt_text();

    let mut last = nodes[0];
    for n in &nodes[1..] {
        if n.1 > last.1 {
            last = *n;
        }
    }

    let round1: Vec<Job> = subjects
        .iter()
        .map(|s| {
            Ok(Job {
                subject: *s,
                role: Some(AgentRole::SubjectExpert),
                round: Some(1),
                prompt: render_prompt(AgentRole::SubjectExpert, *s, &text, &[])?,
                start_ms: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    let first = run_batch(round1, question, selection, client, cfg.parallelism);
    let barrier = first.iter().map(|r| r.finish_ms).fold(0.0, f64::max);

    let mut round2 = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let peers: Vec<(Subject, String)> = first
            .iter()
            .filter(|r| r.subject != *s)
            .map(|r| (r.subject, r.reply.clone()))
            .collect();
        let (role, prompt) = if peers.is_empty() {
            (AgentRole::SubjectExpert, render_prompt(AgentRole::SubjectExpert, *s, &text, &[])?)
        } else {
            (AgentRole::Supporting, render_prompt(AgentRole::Supporting, *s, &text, &peers)?)
        };
        round2.push(Job {
            subject: *s,
            role: Some(role),
            round: Some(2),
            prompt: format!("{prompt}\n{ANSWER_FORMAT_LINE}"),
            start_ms: barrier,
        });
    }
    let second = run_batch(round2, question, selection, client, cfg.parallelism);

    let records: Vec<NodeRecord> = first.into_iter().chain(second).collect();
    Ok(finish_trace(question, ExecutionMode::Fcg, records, last.0))
}

/// The single-model chain-of-thought baseline: one call.
pub fn execute_single(
    question: &QuestionRecord,
    subject: Subject,
    model: &ModelPoolEntry,
    client: &LlmClient,
) -> ExecutionTrace {
    let job = Job {
        subject,
        role: None,
        round: None,
        prompt: render_single_model_prompt(&question.prompt_text()),
        start_ms: 0.0,
    };
    let record = run_job(job, question, model, client);
    finish_trace(question, ExecutionMode::Single, vec![record], subject)
}
