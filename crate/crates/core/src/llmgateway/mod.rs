//! Chat-completion gateway with sampling controls, retries, and a
//! record/replay transcript store.
//!
//! Every request is identified by a transcript key, a SHA-256 over the
//! canonical JSON of its messages and sampling parameters. In replay mode the
//! gateway only reads the store and never touches the network.

mod extract;
mod http;
mod store;

use std::fmt;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_code, ExtractedCode};
pub use http::HttpBackend;
pub use store::{transcript_key, Transcript, TranscriptStore};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("API error {status}: {body}")]
    Api { status: u16, body: String },
    #[error("no transcript recorded for request {0}")]
    ReplayMiss(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("transcript store: {0}")]
    Store(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    fn retryable(&self) -> bool {
        match self {
            GatewayError::Api { status, .. } => *status == 429 || *status >= 500,
            GatewayError::Timeout | GatewayError::Transport(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

impl fmt::Display for ChatMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        write!(f, "[{role}]\n{}", self.content)
    }
}

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo-0613";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub n_samples: u32,
    pub max_tokens: Option<u32>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL.into(),
            temperature: 1.0,
            top_p: 1.0,
            n_samples: 5,
            max_tokens: None,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} < 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "top_p {} not in (0, 1]",
                self.top_p
            )));
        }
        if self.n_samples == 0 || self.max_tokens == Some(0) {
            return Err(GatewayError::InvalidRequest(
                "n_samples and max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_samples(&self, n: u32) -> Self {
        Self {
            n_samples: n,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, o: Usage) {
        self.prompt_tokens += o.prompt_tokens;
        self.completion_tokens += o.completion_tokens;
        self.total_tokens += o.total_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub completions: Vec<String>,
    pub usage: Option<Usage>,
    pub transcript_key: String,
    /// Network attempts made; zero for replayed responses.
    pub attempts: u32,
}

/// One network round trip asking for `n` completions. Implementations may
/// return fewer when the server ignores `n`.
pub trait ChatBackend: Send + Sync {
    fn send(
        &self,
        messages: &[ChatMessage],
        params: &SamplingParams,
        n: u32,
    ) -> Result<(Vec<String>, Option<Usage>), GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32 << attempt.saturating_sub(1).min(16);
        (self.base_delay * factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GatewayMode {
    Live {
        endpoint: String,
        api_key: Option<String>,
    },
    Record {
        endpoint: String,
        api_key: Option<String>,
        store: PathBuf,
    },
    Replay {
        store: PathBuf,
    },
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *p == 0 {
            p = self.freed.wait(p).unwrap_or_else(|e| e.into_inner());
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    backend: Option<Box<dyn ChatBackend>>,
    store: Option<TranscriptStore>,
    replay: bool,
    retry: RetryPolicy,
    in_flight: Semaphore,
}

pub const DEFAULT_CONCURRENCY: usize = 4;

impl Gateway {
    pub fn new(mode: GatewayMode, request_timeout: Duration) -> Result<Self, GatewayError> {
        match mode {
            GatewayMode::Live { endpoint, api_key } => Ok(Self::with_backend(
                Box::new(HttpBackend::new(&endpoint, api_key, request_timeout)?),
                None,
            )),
            GatewayMode::Record {
                endpoint,
                api_key,
                store,
            } => Ok(Self::with_backend(
                Box::new(HttpBackend::new(&endpoint, api_key, request_timeout)?),
                Some(TranscriptStore::open(store)),
            )),
            GatewayMode::Replay { store } => Ok(Self::replay(store)),
        }
    }

    pub fn replay(store: impl Into<PathBuf>) -> Self {
        Self {
            backend: None,
            store: Some(TranscriptStore::open(store)),
            replay: true,
            retry: RetryPolicy::default(),
            in_flight: Semaphore::new(DEFAULT_CONCURRENCY),
        }
    }

    /// A gateway over a custom backend; with a store it records every call.
    pub fn with_backend(backend: Box<dyn ChatBackend>, record_to: Option<TranscriptStore>) -> Self {
        Self {
            backend: Some(backend),
            store: record_to,
            replay: false,
            retry: RetryPolicy::default(),
            in_flight: Semaphore::new(DEFAULT_CONCURRENCY),
        }
    }

    pub fn retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.in_flight = Semaphore::new(n);
        self
    }

    pub fn is_replay(&self) -> bool {
        self.replay
    }

    pub fn complete(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<ChatResponse, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if let Some(m) = messages.iter().find(|m| m.role != Role::System && m.content.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("empty {:?} message", m.role)));
        }
        params.validate()?;
        let key = transcript_key(messages, params);

        if self.replay {
            let store = self.store.as_ref().expect("replay gateway has a store");
            let t = store.get(&key)?.ok_or_else(|| GatewayError::ReplayMiss(key.clone()))?;
            return Ok(ChatResponse {
                completions: t.completions,
                usage: None,
                transcript_key: key,
                attempts: 0,
            });
        }

        let backend = self.backend.as_ref().expect("live gateway has a backend");
        let wanted = params.n_samples as usize;
        let mut completions = Vec::with_capacity(wanted);
        let mut usage: Option<Usage> = None;
        let mut attempts = 0;
        while completions.len() < wanted {
            // first try all n at once; servers without `n` support get topped up one by one
            let n = if completions.is_empty() { params.n_samples } else { 1 };
            let (batch, u, tries) = self.send_with_retry(backend.as_ref(), messages, params, n)?;
            attempts += tries;
            if batch.is_empty() {
                return Err(GatewayError::Transport("server returned no choices".into()));
            }
            if let Some(u) = u {
                *usage.get_or_insert_with(Usage::default) += u;
            }
            completions.extend(batch);
        }
        completions.truncate(wanted);

        if let Some(store) = &self.store {
            store.record(messages, params, completions.clone(), chrono::Utc::now().to_rfc3339())?;
        }
        Ok(ChatResponse {
            completions,
            usage,
            transcript_key: key,
            attempts,
        })
    }

    fn send_with_retry(
        &self,
        backend: &dyn ChatBackend,
        messages: &[ChatMessage],
        params: &SamplingParams,
        n: u32,
    ) -> Result<(Vec<String>, Option<Usage>, u32), GatewayError> {
        let _permit = self.in_flight.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match backend.send(messages, params, n) {
                Ok((c, u)) => {
                    log::info!("chat completion succeeded on attempt {attempt}");
                    return Ok((c, u, attempt));
                }
                Err(e) if e.retryable() && attempt < self.retry.max_attempts => {
                    let delay = self.retry.delay(attempt);
                    log::warn!("chat completion attempt {attempt} failed ({e}); retrying in {delay:?}");
                    thread::sleep(delay);
                }
                Err(e) => {
                    log::error!("chat completion failed after {attempt} attempts: {e}");
                    return Err(e);
                }
            }
        }
    }
}
