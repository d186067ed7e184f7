use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HttpPolicy {
    /// Extra attempts after the first one.
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for HttpPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff_ms: 500,
            timeout_ms: 60_000,
        }
    }
}

enum Failure {
    Retryable(String),
    Timeout,
}

/// POSTs a JSON body, retrying transport failures, timeouts and 5xx replies
/// with exponential backoff. 401/403 fail immediately.
///
/// Returns the decoded body and the number of attempts made.
pub fn post_json(
    client: &Client,
    backend: &str,
    url: &str,
    bearer: Option<&str>,
    body: &Value,
    policy: &HttpPolicy,
) -> Result<(Value, u32), BackendError> {
    let max_attempts = policy.retries + 1;
    let mut last = Failure::Retryable("no attempt made".into());
    for attempt in 1..=max_attempts {
        let mut builder = client
            .post(url)
            .timeout(Duration::from_millis(policy.timeout_ms))
            .json(body);
        if let Some(key) = bearer {
            builder = builder.bearer_auth(key);
        }
        match builder.send() {
            Ok(resp) => {
                let status = resp.status();
                if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                    return Err(BackendError::Auth {
                        backend: backend.to_string(),
                        message: format!("HTTP {status}"),
                    });
                }
                if status.is_server_error() {
                    last = Failure::Retryable(format!("HTTP {status}"));
                } else if !status.is_success() {
                    return Err(BackendError::Transport {
                        backend: backend.to_string(),
                        attempts: attempt,
                        message: format!("HTTP {status}"),
                    });
                } else {
                    let value: Value = resp.json().map_err(|e| BackendError::InvalidResponse {
                        backend: backend.to_string(),
                        message: e.to_string(),
                    })?;
                    return Ok((value, attempt));
                }
            }
            Err(e) if e.is_timeout() => last = Failure::Timeout,
            Err(e) => last = Failure::Retryable(e.to_string()),
        }
        if attempt < max_attempts {
            let delay = policy.backoff_ms.saturating_mul(1u64 << (attempt - 1).min(16));
            log::debug!("{backend}: attempt {attempt} failed, retrying in {delay} ms");
            thread::sleep(Duration::from_millis(delay));
        }
    }
    Err(match last {
        Failure::Timeout => BackendError::Timeout {
            backend: backend.to_string(),
            attempts: max_attempts,
        },
        Failure::Retryable(message) => BackendError::Transport {
            backend: backend.to_string(),
            attempts: max_attempts,
            message,
        },
    })
}
