use std::sync::{Condvar, Mutex};
use std::time::Instant;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::http::{post_json, HttpPolicy};
use super::{BackendConfig, BackendError, ChatBackend, ChatRequest, ChatResponse};

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// OpenAI-compatible `/v1/chat/completions` client.
pub struct RemoteBackend {
    name: String,
    endpoint: String,
    model: String,
    key_env: Option<String>,
    policy: HttpPolicy,
    client: Client,
    limiter: Limiter,
}

/// Appends `/chat/completions` to a base URL such as `http://host/v1`.
pub(crate) fn chat_endpoint(url: &str) -> String {
    let trimmed = url.trim_end_matches('/');
    if trimmed.ends_with("/chat/completions") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/chat/completions")
    }
}

impl RemoteBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let url = cfg
            .url
            .as_deref()
            .ok_or_else(|| BackendError::Config(format!("backend `{}` has no url", cfg.name)))?;
        let client = Client::builder()
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            name: cfg.name.clone(),
            endpoint: chat_endpoint(url),
            model: cfg.model.clone().unwrap_or_else(|| cfg.name.clone()),
            key_env: cfg.key_env.clone(),
            policy: HttpPolicy {
                retries: cfg.retries,
                backoff_ms: cfg.backoff_ms,
                timeout_ms: cfg.timeout_ms,
            },
            client,
            limiter: Limiter::new(cfg.max_in_flight),
        })
    }

    fn credential(&self) -> Result<Option<String>, BackendError> {
        match &self.key_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Ok(Some(key)),
                _ => Err(BackendError::Auth {
                    backend: self.name.clone(),
                    message: format!("environment variable {var} is not set"),
                }),
            },
        }
    }

    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &req.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": req.user}));
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }
}

impl ChatBackend for RemoteBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &ChatRequest, _run_seed: u64) -> Result<ChatResponse, BackendError> {
        let key = self.credential()?;
        let body = self.request_body(req);
        let _permit = self.limiter.acquire();
        let start = Instant::now();
        let (value, attempts) = post_json(
            &self.client,
            &self.name,
            &self.endpoint,
            key.as_deref(),
            &body,
            &self.policy,
        )?;
        let latency_ms = start.elapsed().as_secs_f64() * 1000.0;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::InvalidResponse {
                backend: self.name.clone(),
                message: "missing choices[0].message.content".into(),
            })?
            .to_string();
        Ok(ChatResponse {
            text,
            latency_ms,
            attempts,
            backend: self.name.clone(),
        })
    }
}
