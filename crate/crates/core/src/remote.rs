//! HTTP adapters for model-backed encoder, scorer, navigator and listwise
//! backends.
//!
//! Every adapter POSTs one JSON envelope to its endpoint:
//!
//! ```json
//! {"task": "judge", "model": "m", "input": { ... }}
//! ```
//!
//! and expects
//!
//! ```json
//! {"output": { ... }, "usage": {"input_tokens": 10, "output_tokens": 3}}
//! ```
//!
//! `usage` is required for every task except `embed`. Its `model` field is
//! optional and defaults to the configured model. The per-task `input` and
//! `output` bodies are:
//!
//! | task      | input                            | output                                   |
//! |-----------|----------------------------------|------------------------------------------|
//! | `embed`   | `{"texts": [..]}`                | `{"embeddings": [[..], ..]}`             |
//! | `judge`   | [`JudgeRequest`]                 | [`Judgment`]                             |
//! | `plan`    | [`SearchIntent`]                 | [`Plan`]                                 |
//! | `reflect` | [`ReflectContext`]               | [`Reflection`]                           |
//! | `rerank`  | [`ListwiseRequest`]              | `{"order": ["paper_id", ..]}`            |
//!
//! Connection errors, timeouts, HTTP 429 and 5xx are retried with
//! exponential backoff. Other statuses and undecodable bodies fail at once.

use crate::backend::{BackendFailure, TokenUsage};
use crate::corpus::PaperId;
use crate::encoder::{EncodeError, Embedding, EncoderBackend};
use crate::orchestrator::{NavigatorBackend, Plan, ReflectContext, Reflection, SearchIntent};
use crate::rerank::{ListwiseBackend, ListwiseRequest};
use crate::verify::{JudgeRequest, Judged, Judgment, ScorerBackend};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::thread;
use std::time::Duration;

/// Connection settings shared by all adapters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default)]
    pub model: String,
    /// Sent as a bearer token when present.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

impl Endpoint {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: None,
            timeout_ms: default_timeout_ms(),
            max_attempts: default_max_attempts(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    task: &'a str,
    model: &'a str,
    input: &'a T,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    model: Option<String>,
    input_tokens: u64,
    output_tokens: u64,
}

#[derive(Deserialize)]
struct Reply<O> {
    output: O,
    #[serde(default)]
    usage: Option<WireUsage>,
}

/// Blocking JSON-over-HTTP client with retries.
pub struct RemoteClient {
    name: String,
    endpoint: Endpoint,
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    pub fn new(name: impl Into<String>, endpoint: Endpoint) -> Result<Self, BackendFailure> {
        let name = name.into();
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .build()
            .map_err(|e| BackendFailure::new(&name, format!("http client: {e}")))?;
        Ok(Self { name, endpoint, http })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// One task call. When `usage_required` is set a reply without `usage`
    /// is an error, so costs are never silently dropped.
    pub fn call<I: Serialize, O: DeserializeOwned>(
        &self,
        task: &str,
        input: &I,
        usage_required: bool,
    ) -> Result<(O, TokenUsage), BackendFailure> {
        let body = Envelope {
            task,
            model: &self.endpoint.model,
            input,
        };
        let max = self.endpoint.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(&body) {
                Ok(text) => return self.decode(&text, usage_required, attempt),
                Err((msg, retryable)) if retryable && attempt < max => {
                    log::warn!("{}: attempt {attempt}/{max} failed: {msg}", self.name);
                    let wait = self.endpoint.backoff_ms.saturating_mul(1 << (attempt - 1).min(10));
                    thread::sleep(Duration::from_millis(wait));
                }
                Err((msg, retryable)) => {
                    let f = BackendFailure::new(&self.name, msg);
                    return Err(if retryable { f.retryable(attempt) } else { BackendFailure { attempts: attempt, ..f } });
                }
            }
        }
    }

    fn send_once<T: Serialize>(&self, body: &Envelope<'_, T>) -> Result<String, (String, bool)> {
        let mut req = self.http.post(&self.endpoint.url).json(body);
        if let Some(key) = &self.endpoint.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (format!("transport: {e}"), true))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| (format!("reading body: {e}"), true))?;
        if status.is_success() {
            Ok(text)
        } else {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            Err((format!("HTTP {status}: {}", truncate(&text, 200)), retryable))
        }
    }

    fn decode<O: DeserializeOwned>(&self, text: &str, usage_required: bool, attempts: u32) -> Result<(O, TokenUsage), BackendFailure> {
        let fail = |msg: String| BackendFailure {
            attempts,
            ..BackendFailure::new(&self.name, msg)
        };
        let reply: Reply<O> = serde_json::from_str(text).map_err(|e| fail(format!("undecodable reply: {e}")))?;
        let usage = match reply.usage {
            Some(u) => TokenUsage::new(
                u.model.unwrap_or_else(|| self.endpoint.model.clone()),
                u.input_tokens,
                u.output_tokens,
            ),
            None if usage_required => return Err(fail("reply carries no usage".into())),
            None => TokenUsage::none(),
        };
        Ok((reply.output, usage))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub struct RemoteEncoder {
    client: RemoteClient,
    dimension: usize,
}

impl RemoteEncoder {
    pub fn new(endpoint: Endpoint, dimension: usize) -> Result<Self, BackendFailure> {
        Ok(Self {
            client: RemoteClient::new("remote-encoder", endpoint)?,
            dimension,
        })
    }
}

#[derive(Serialize)]
struct EmbedInput<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedOutput {
    embeddings: Vec<Vec<f64>>,
}

impl EncoderBackend for RemoteEncoder {
    fn name(&self) -> &str {
        self.client.name()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncodeError> {
        let (out, _): (EmbedOutput, _) = self
            .client
            .call("embed", &EmbedInput { texts }, false)
            .map_err(EncodeError::Backend)?;
        if out.embeddings.len() != texts.len() {
            return Err(EncodeError::Backend(BackendFailure::new(
                self.client.name(),
                format!("{} embeddings for {} texts", out.embeddings.len(), texts.len()),
            )));
        }
        out.embeddings.into_iter().map(Embedding::normalized).collect()
    }
}

pub struct RemoteScorer {
    client: RemoteClient,
}

impl RemoteScorer {
    pub fn new(endpoint: Endpoint) -> Result<Self, BackendFailure> {
        Ok(Self {
            client: RemoteClient::new("remote-scorer", endpoint)?,
        })
    }
}

impl ScorerBackend for RemoteScorer {
    fn name(&self) -> &str {
        self.client.name()
    }

    fn judge(&self, request: &JudgeRequest) -> Result<Judged, BackendFailure> {
        let (judgment, usage): (Judgment, _) = self.client.call("judge", request, true)?;
        Ok(Judged { judgment, usage })
    }
}

pub struct RemoteNavigator {
    client: RemoteClient,
}

impl RemoteNavigator {
    pub fn new(endpoint: Endpoint) -> Result<Self, BackendFailure> {
        Ok(Self {
            client: RemoteClient::new("remote-navigator", endpoint)?,
        })
    }
}

impl NavigatorBackend for RemoteNavigator {
    fn name(&self) -> &str {
        self.client.name()
    }

    fn plan(&self, intent: &SearchIntent) -> Result<(Plan, TokenUsage), BackendFailure> {
        self.client.call("plan", intent, true)
    }

    fn reflect(&self, context: &ReflectContext) -> Result<(Reflection, TokenUsage), BackendFailure> {
        self.client.call("reflect", context, true)
    }
}

pub struct RemoteListwise {
    client: RemoteClient,
}

impl RemoteListwise {
    pub fn new(endpoint: Endpoint) -> Result<Self, BackendFailure> {
        Ok(Self {
            client: RemoteClient::new("remote-listwise", endpoint)?,
        })
    }
}

#[derive(Deserialize)]
struct RerankOutput {
    order: Vec<PaperId>,
}

impl ListwiseBackend for RemoteListwise {
    fn name(&self) -> &str {
        self.client.name()
    }

    fn reorder(&self, request: &ListwiseRequest) -> Result<(Vec<PaperId>, TokenUsage), BackendFailure> {
        let (out, usage): (RerankOutput, _) = self.client.call("rerank", request, true)?;
        Ok((out.order, usage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves the given (status, body) replies in order, one per connection,
    /// and returns the URL plus a counter of requests seen.
    fn stub(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let seen = Arc::new(AtomicUsize::new(0));
        let counter = seen.clone();
        thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, seen)
    }

    fn endpoint(url: String) -> Endpoint {
        Endpoint {
            backoff_ms: 1,
            ..Endpoint::new(url, "test-model")
        }
    }

    #[test]
    fn rerank_with_usage() {
        let (url, _) = stub(vec![(
            200,
            r#"{"output":{"order":["b","a"]},"usage":{"input_tokens":12,"output_tokens":4}}"#.into(),
        )]);
        let lw = RemoteListwise::new(endpoint(url)).unwrap();
        let req = ListwiseRequest {
            query: "q".into(),
            candidates: vec![],
        };
        let (order, usage) = lw.reorder(&req).unwrap();
        assert_eq!(order, vec![PaperId::from("b"), PaperId::from("a")]);
        assert_eq!(usage, TokenUsage::new("test-model", 12, 4));
    }

    #[test]
    fn retries_server_errors() {
        let (url, seen) = stub(vec![
            (503, "busy".into()),
            (200, r#"{"output":{"embeddings":[[3.0,4.0]]}}"#.into()),
        ]);
        let enc = RemoteEncoder::new(endpoint(url), 2).unwrap();
        let v = enc.encode_batch(&["x"]).unwrap();
        assert_eq!(seen.load(Ordering::SeqCst), 2);
        assert!((v[0].as_slice()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen) = stub(vec![(400, "bad".into())]);
        let lw = RemoteListwise::new(endpoint(url)).unwrap();
        let err = lw
            .reorder(&ListwiseRequest {
                query: "q".into(),
                candidates: vec![],
            })
            .unwrap_err();
        assert!(!err.retryable);
        assert_eq!(seen.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn missing_usage_is_an_error() {
        let (url, _) = stub(vec![(200, r#"{"output":{"order":[]}}"#.into())]);
        let lw = RemoteListwise::new(endpoint(url)).unwrap();
        let err = lw
            .reorder(&ListwiseRequest {
                query: "q".into(),
                candidates: vec![],
            })
            .unwrap_err();
        assert!(err.message.contains("usage"));
    }
}
