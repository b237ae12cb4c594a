use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::message::{conversation_key, Message, Role};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Transient: rate limit, timeout, 5xx. The agent loop retries these.
    #[error("retryable backend error: {0}")]
    Retryable(String),
    #[error("backend error: {0}")]
    Fatal(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Retryable(_))
    }
}

/// A chat model: ordered messages in, assistant text out.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, messages: &[Message]) -> Result<String, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        (**self).complete(messages)
    }
}

/// Deterministic agent behavior computed from the conversation so far.
pub trait AgentScript: Send + Sync {
    fn respond(&self, messages: &[Message]) -> Result<String, BackendError>;
}

impl<F> AgentScript for F
where
    F: Fn(&[Message]) -> Result<String, BackendError> + Send + Sync,
{
    fn respond(&self, messages: &[Message]) -> Result<String, BackendError> {
        self(messages)
    }
}

pub struct ScriptedBackend {
    name: String,
    script: Box<dyn AgentScript>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, script: impl AgentScript + 'static) -> Self {
        Self {
            name: name.into(),
            script: Box::new(script),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        self.script.respond(messages)
    }
}

/// Returns canned responses in order, cycling when exhausted.
pub struct SequenceBackend {
    responses: Vec<Result<String, BackendError>>,
    cursor: Mutex<usize>,
}

impl SequenceBackend {
    pub fn new(responses: Vec<String>) -> Self {
        Self::with_results(responses.into_iter().map(Ok).collect())
    }

    pub fn with_results(responses: Vec<Result<String, BackendError>>) -> Self {
        assert!(!responses.is_empty(), "sequence backend needs a response");
        Self {
            responses,
            cursor: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.cursor.lock().expect("cursor lock")
    }
}

impl ChatBackend for SequenceBackend {
    fn name(&self) -> &str {
        "sequence"
    }

    fn complete(&self, _messages: &[Message]) -> Result<String, BackendError> {
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let r = self.responses[*cursor % self.responses.len()].clone();
        *cursor += 1;
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub key: String,
    pub response: String,
}

/// Replays responses keyed by the hash of the incoming message list.
pub struct ReplayBackend {
    records: HashMap<String, String>,
    fallback: Option<Box<dyn ChatBackend>>,
}

impl ReplayBackend {
    pub fn new(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        Self {
            records: records.into_iter().map(|r| (r.key, r.response)).collect(),
            fallback: None,
        }
    }

    /// Reads one JSON record (`{"key", "response"}`) per line.
    pub fn from_jsonl(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: ReplayRecord = serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), n + 1),
                )
            })?;
            records.push(r);
        }
        Ok(Self::new(records))
    }

    pub fn with_fallback(mut self, fallback: Box<dyn ChatBackend>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        let key = conversation_key(messages);
        if let Some(r) = self.records.get(&key) {
            return Ok(r.clone());
        }
        match &self.fallback {
            Some(f) => f.complete(messages),
            None => Err(BackendError::Fatal(format!(
                "no recorded response for conversation {key}"
            ))),
        }
    }
}

/// Wraps a backend and records every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    records: Mutex<Vec<ReplayRecord>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn records(&self) -> Vec<ReplayRecord> {
        self.records.lock().expect("records lock").clone()
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        for r in self.records() {
            writeln!(f, "{}", serde_json::to_string(&r)?)?;
        }
        Ok(())
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        let response = self.inner.complete(messages)?;
        self.records.lock().expect("records lock").push(ReplayRecord {
            key: conversation_key(messages),
            response: response.clone(),
        });
        Ok(response)
    }
}

pub const API_KEY_ENV: &str = "CTXFORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://host/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

/// Chat-completions client for OpenAI-compatible endpoints.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// Reads the bearer token from `CTXFORGE_API_KEY`.
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| BackendError::Fatal(format!("{API_KEY_ENV} is not set")))?;
        Self::new(config, key)
    }

    pub fn new(config: HttpBackendConfig, api_key: String) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        // Tool observations go back as user turns; the text protocol needs no
        // native tool-call wiring.
        let wire: Vec<serde_json::Value> = messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::Tool => "user",
                    r => r.as_str(),
                };
                serde_json::json!({"role": role, "content": m.content})
            })
            .collect();
        let mut body = serde_json::json!({"model": self.config.model, "messages": wire});
        if let Some(t) = self.config.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let resp = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Retryable(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Retryable(format!("{status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("{status}: {text}")));
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Fatal(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Fatal(format!("unexpected response shape: {text}")))
    }
}
