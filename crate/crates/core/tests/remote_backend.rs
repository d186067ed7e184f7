//! Remote backend against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use sdag::backend::{BackendConfig, BackendError, ChatRequest, LlmClient};

/// Serves one canned status per connection and records request bodies.
fn serve(statuses: Vec<u16>) -> (String, Arc<Mutex<Vec<String>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&bodies);
    let handle = thread::spawn(move || {
        for status in statuses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            seen.lock().unwrap().push(String::from_utf8(body).unwrap());
            let payload = if status == 200 {
                r#"{"choices":[{"message":{"role":"assistant","content":"The answer is <<B>>"}}]}"#.to_string()
            } else {
                r#"{"error":"nope"}"#.to_string()
            };
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), bodies, handle)
}

fn client(url: &str, key_env: Option<&str>) -> LlmClient {
    let mut cfg = BackendConfig::remote("stub", url, "stub-model");
    cfg.backoff_ms = 1;
    cfg.timeout_ms = 5_000;
    cfg.key_env = key_env.map(str::to_string);
    LlmClient::from_configs(&[cfg]).unwrap()
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, bodies, handle) = serve(vec![500, 500, 200]);
    let resp = client(&url, None).complete(&ChatRequest::new("stub", "hello")).unwrap();
    handle.join().unwrap();
    assert_eq!(resp.attempts, 3);
    assert_eq!(resp.text, "The answer is <<B>>");
    let bodies = bodies.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["messages"][0]["content"], "hello");
}

#[test]
fn unauthorized_is_not_retried() {
    let (url, bodies, handle) = serve(vec![401]);
    let err = client(&url, None).complete(&ChatRequest::new("stub", "hello")).unwrap_err();
    handle.join().unwrap();
    assert!(matches!(err, BackendError::Auth { .. }), "{err:?}");
    assert_eq!(bodies.lock().unwrap().len(), 1);
}

#[test]
fn exhausted_retries_report_attempts() {
    let (url, _, handle) = serve(vec![503, 503, 503, 503]);
    let err = client(&url, None).complete(&ChatRequest::new("stub", "hello")).unwrap_err();
    handle.join().unwrap();
    assert_eq!(
        err,
        BackendError::Transport {
            backend: "stub".into(),
            attempts: 4,
            message: "HTTP 503 Service Unavailable".into()
        }
    );
}

#[test]
fn missing_key_fails_before_any_request() {
    // nothing listens on this port: an attempted request would be a transport error
    let c = client("http://127.0.0.1:9/v1", Some("SDAG_TEST_KEY_THAT_IS_NEVER_SET"));
    let err = c.complete(&ChatRequest::new("stub", "hello")).unwrap_err();
    assert!(matches!(err, BackendError::Auth { .. }), "{err:?}");
}
