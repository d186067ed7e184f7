//! Chat-completion backends: remote OpenAI-compatible endpoints and a
//! scripted mock, behind one client that counts every call.

mod http;
mod mock;
mod remote;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subject::Subject;

pub use http::{post_json, HttpPolicy};
pub use mock::{mock_complete, MockBackend, MockMatch, MockReply, MockRule, OracleEntry, OracleReply, LookupReply, MetaField};
pub use remote::RemoteBackend;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("{backend}: transport failure after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("{backend}: authentication failed: {message}")]
    Auth { backend: String, message: String },
    #[error("{backend}: timed out after {attempts} attempt(s)")]
    Timeout { backend: String, attempts: u32 },
    #[error("{backend}: no mock rule matched")]
    NoRuleMatched { backend: String },
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{backend}: malformed response: {message}")]
    InvalidResponse { backend: String, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Tracing metadata attached to a request. Mock rules can match on it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<Subject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purpose: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub backend: String,
    pub system: Option<String>,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub meta: RequestMeta,
}

impl ChatRequest {
    pub fn new(backend: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            backend: backend.into(),
            system: None,
            user: user.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            meta: RequestMeta::default(),
        }
    }

    pub fn with_meta(mut self, meta: RequestMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    /// Measured for remote backends, simulated for mocks.
    pub latency_ms: f64,
    pub attempts: u32,
    pub backend: String,
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    /// `run_seed` lets mocks vary simulated latency per evaluation trial.
    fn complete(&self, req: &ChatRequest, run_seed: u64) -> Result<ChatResponse, BackendError>;
}

/// Counts logical calls, in total and per question id.
#[derive(Debug, Default)]
pub struct CallCounter {
    total: AtomicU64,
    by_question: Mutex<BTreeMap<String, u64>>,
}

impl CallCounter {
    pub fn record(&self, meta: &RequestMeta) {
        self.total.fetch_add(1, Ordering::SeqCst);
        let key = meta.question_id.clone().unwrap_or_default();
        *self
            .by_question
            .lock()
            .expect("call counter poisoned")
            .entry(key)
            .or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::SeqCst)
    }

    pub fn for_question(&self, id: &str) -> u64 {
        self.by_question
            .lock()
            .expect("call counter poisoned")
            .get(id)
            .copied()
            .unwrap_or(0)
    }
}

/// Named backends sharing one call counter.
#[derive(Clone, Default)]
pub struct LlmClient {
    backends: BTreeMap<String, Arc<dyn ChatBackend>>,
    counter: Arc<CallCounter>,
    run_seed: u64,
}

impl LlmClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_configs(configs: &[BackendConfig]) -> Result<Self, BackendError> {
        let mut client = Self::new();
        for cfg in configs {
            client.register(cfg.build()?);
        }
        Ok(client)
    }

    pub fn register(&mut self, backend: Arc<dyn ChatBackend>) {
        self.backends.insert(backend.name().to_string(), backend);
    }

    pub fn with_backend(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.register(backend);
        self
    }

    /// Same backends, fresh counter, different trial seed.
    pub fn for_run(&self, run_seed: u64) -> Self {
        Self {
            backends: self.backends.clone(),
            counter: Arc::new(CallCounter::default()),
            run_seed,
        }
    }

    pub fn has_backend(&self, name: &str) -> bool {
        self.backends.contains_key(name)
    }

    pub fn counter(&self) -> &CallCounter {
        &self.counter
    }

    pub fn run_seed(&self) -> u64 {
        self.run_seed
    }

    /// One logical call: counted exactly once regardless of retries.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        req.validate()?;
        let backend = self
            .backends
            .get(&req.backend)
            .ok_or_else(|| BackendError::UnknownBackend(req.backend.clone()))?;
        self.counter.record(&req.meta);
        backend.complete(req, self.run_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Mock,
}

fn default_max_in_flight() -> usize {
    4
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_latency_ms() -> [f64; 2] {
    [200.0, 800.0]
}

/// One entry of a backend configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_env: Option<String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Mock only: path to a rule file (relative to the config file).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Mock only: inline rules, used when `script` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<MockRule>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_latency_ms")]
    pub latency_ms: [f64; 2],
}

impl BackendConfig {
    pub fn mock(name: impl Into<String>, rules: Vec<MockRule>) -> Self {
        Self {
            name: name.into(),
            kind: BackendKind::Mock,
            url: None,
            model: None,
            key_env: None,
            max_in_flight: default_max_in_flight(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            script: None,
            rules: Some(rules),
            seed: 0,
            latency_ms: default_latency_ms(),
        }
    }

    pub fn remote(name: impl Into<String>, url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: BackendKind::Remote,
            url: Some(url.into()),
            model: Some(model.into()),
            key_env: None,
            max_in_flight: default_max_in_flight(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            script: None,
            rules: None,
            seed: 0,
            latency_ms: default_latency_ms(),
        }
    }

    /// Makes `script` absolute against the directory of the config file.
    pub fn resolve_paths(&mut self, base_dir: &Path) {
        if let Some(script) = &self.script {
            if script.is_relative() {
                self.script = Some(base_dir.join(script));
            }
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ChatBackend>, BackendError> {
        match self.kind {
            BackendKind::Remote => Ok(Arc::new(RemoteBackend::from_config(self)?)),
            BackendKind::Mock => {
                let rules = match (&self.script, &self.rules) {
                    (Some(path), _) => mock::load_script(path)?,
                    (None, Some(rules)) => rules.clone(),
                    (None, None) => {
                        return Err(BackendError::Config(format!(
                            "mock backend `{}` has neither `script` nor `rules`",
                            self.name
                        )))
                    }
                };
                Ok(Arc::new(MockBackend::new(
                    self.name.clone(),
                    rules,
                    self.seed,
                    self.latency_ms,
                )?))
            }
        }
    }
}
