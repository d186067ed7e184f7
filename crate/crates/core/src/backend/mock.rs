//! Scripted mock backend. Rules are tried in file order; the first one that
//! matches and yields a reply wins.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, RequestMeta};
use crate::embedding::fnv1a64;
use crate::subject::Subject;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaField {
    QuestionId,
    Subject,
    Role,
    ModelId,
    Purpose,
}

impl MetaField {
    fn get(self, meta: &RequestMeta) -> Option<String> {
        match self {
            MetaField::QuestionId => meta.question_id.clone(),
            MetaField::Subject => meta.subject.map(|s| s.name().to_string()),
            MetaField::Role => meta.role.clone(),
            MetaField::ModelId => meta.model_id.clone(),
            MetaField::Purpose => meta.purpose.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMatch {
    /// Prompt (system or user) contains the text.
    Substring(String),
    /// Prompt matches the regular expression.
    Regex(String),
    Metadata { field: MetaField, equals: String },
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub gold: String,
    pub wrong: String,
    pub dominant: Subject,
}

/// Answers `gold` iff the question's dominant subject equals `specialty`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReply {
    pub specialty: Subject,
    pub key: BTreeMap<String, OracleEntry>,
}

/// Reply looked up by a metadata field; falls through when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupReply {
    pub field: MetaField,
    pub table: BTreeMap<String, String>,
    #[serde(default)]
    pub default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Oracle { oracle: OracleReply },
    Lookup { lookup: LookupReply },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub matcher: MockMatch,
    pub reply: MockReply,
}

impl MockRule {
    pub fn new(matcher: MockMatch, reply: MockReply) -> Self {
        Self { matcher, reply }
    }
}

pub(crate) fn load_script(path: &Path) -> Result<Vec<MockRule>, BackendError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
}

enum CompiledMatch {
    Substring(String),
    Regex(Regex),
    Metadata(MetaField, String),
    Any,
}

pub struct MockBackend {
    name: String,
    rules: Vec<(CompiledMatch, MockReply)>,
    seed: u64,
    latency_ms: [f64; 2],
}

impl MockBackend {
    pub fn new(
        name: impl Into<String>,
        rules: Vec<MockRule>,
        seed: u64,
        latency_ms: [f64; 2],
    ) -> Result<Self, BackendError> {
        let name = name.into();
        let [lo, hi] = latency_ms;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(BackendError::Config(format!(
                "{name}: invalid latency range [{lo}, {hi}]"
            )));
        }
        let rules = rules
            .into_iter()
            .map(|r| {
                let m = match r.matcher {
                    MockMatch::Substring(s) => CompiledMatch::Substring(s),
                    MockMatch::Regex(p) => CompiledMatch::Regex(
                        Regex::new(&p).map_err(|e| BackendError::Config(format!("{name}: {e}")))?,
                    ),
                    MockMatch::Metadata { field, equals } => CompiledMatch::Metadata(field, equals),
                    MockMatch::Any => CompiledMatch::Any,
                };
                Ok((m, r.reply))
            })
            .collect::<Result<_, BackendError>>()?;
        Ok(Self {
            name,
            rules,
            seed,
            latency_ms,
        })
    }

    fn reply_for(&self, req: &ChatRequest) -> Option<String> {
        let system = req.system.as_deref().unwrap_or("");
        for (matcher, reply) in &self.rules {
            let hit = match matcher {
                CompiledMatch::Substring(s) => req.user.contains(s.as_str()) || system.contains(s.as_str()),
                CompiledMatch::Regex(re) => re.is_match(&req.user) || re.is_match(system),
                CompiledMatch::Metadata(field, equals) => {
                    field.get(&req.meta).as_deref() == Some(equals.as_str())
                }
                CompiledMatch::Any => true,
            };
            if !hit {
                continue;
            }
            if let Some(text) = render_reply(reply, &req.meta) {
                return Some(text);
            }
        }
        None
    }

    /// Deterministic latency in `[lo, hi)` derived from seed and request.
    fn latency(&self, req: &ChatRequest, run_seed: u64) -> f64 {
        let [lo, hi] = self.latency_ms;
        if hi <= lo {
            return lo;
        }
        let mut key = Vec::new();
        key.extend_from_slice(&self.seed.to_le_bytes());
        key.extend_from_slice(&run_seed.to_le_bytes());
        key.extend_from_slice(self.name.as_bytes());
        key.push(0);
        key.extend_from_slice(req.system.as_deref().unwrap_or("").as_bytes());
        key.push(0);
        key.extend_from_slice(req.user.as_bytes());
        key.push(0);
        key.extend_from_slice(
            serde_json::to_string(&req.meta)
                .unwrap_or_default()
                .as_bytes(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(&key));
        // whole milliseconds keep traces short and exactly reproducible
        rng.random_range(lo..hi).floor()
    }
}

fn render_reply(reply: &MockReply, meta: &RequestMeta) -> Option<String> {
    match reply {
        MockReply::Text(t) => Some(t.clone()),
        MockReply::Lookup { lookup } => lookup
            .field
            .get(meta)
            .and_then(|v| lookup.table.get(&v).cloned())
            .or_else(|| lookup.default.clone()),
        MockReply::Oracle { oracle } => {
            let qid = meta.question_id.as_ref()?;
            let entry = oracle.key.get(qid)?;
            let answer = if entry.dominant == oracle.specialty {
                &entry.gold
            } else {
                &entry.wrong
            };
            Some(format!(
                "Reasoning from the perspective of {}. The answer is <<{}>>",
                oracle.specialty, answer
            ))
        }
    }
}

/// Evaluates a rule list against a request without building a backend.
pub fn mock_complete(
    rules: &[MockRule],
    seed: u64,
    req: &ChatRequest,
) -> Result<ChatResponse, BackendError> {
    MockBackend::new("mock", rules.to_vec(), seed, [0.0, 0.0])?.complete(req, 0)
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &ChatRequest, run_seed: u64) -> Result<ChatResponse, BackendError> {
        let text = self.reply_for(req).ok_or_else(|| BackendError::NoRuleMatched {
            backend: self.name.clone(),
        })?;
        Ok(ChatResponse {
            text,
            latency_ms: self.latency(req, run_seed),
            attempts: 1,
            backend: self.name.clone(),
        })
    }
}
