//! Provider-agnostic completion gateway.
//!
//! Backends implement [`CompletionBackend`]; the [`LlmGateway`] adds request
//! validation, retries with exponential backoff for transient failures, and
//! latency measurement. Three backends ship with the crate:
//!
//! - [`OpenAiCompatibleBackend`]: any chat-completions HTTP endpoint.
//! - [`ScriptedBackend`]: replays recorded responses for deterministic tests.
//! - [`OfflineBackend`]: a rule-based stand-in that lets the whole pipeline
//!   run without network access.

mod json;
mod offline;
mod openai;
mod scripted;

pub use json::{extract_json_payload, PayloadError};
pub use offline::OfflineBackend;
pub use openai::{OpenAiCompatibleBackend, OpenAiConfig, DEFAULT_API_KEY_ENV};
pub use scripted::{request_digest, RecordingBackend, ScriptEntry, ScriptedBackend};

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub const DEFAULT_MODEL_ID: &str = "gpt-4o-2024-05-13";
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    /// Prompt-kind label, e.g. `slot_fill`. Used by scripted replay.
    pub kind: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub model_id: String,
    pub max_output: Option<u32>,
}

impl CompletionRequest {
    /// Single-user-message request with default model settings.
    pub fn prompt(kind: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            messages: vec![ChatMessage::new(Role::User, text)],
            temperature: DEFAULT_TEMPERATURE,
            model_id: DEFAULT_MODEL_ID.to_owned(),
            max_output: None,
        }
    }

    pub fn with_model(mut self, settings: &ModelSettings) -> Self {
        self.temperature = settings.temperature;
        self.model_id = settings.model_id.clone();
        self.max_output = settings.max_output;
        self
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} out of range",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Model parameters applied to every request an engine issues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_output: Option<u32>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL_ID.to_owned(),
            temperature: DEFAULT_TEMPERATURE,
            max_output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub backend_label: String,
    pub latency: Duration,
}

/// Failure reported by a single backend call.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Connection failures, timeouts, 429s and 5xx responses.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("no scripted exchange for `{kind}` #{ordinal}")]
    ScriptMiss { kind: String, ordinal: usize },
    #[error("malformed backend response: {0}")]
    BadResponse(String),
}

impl BackendError {
    fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("no scripted exchange for `{kind}` #{ordinal}")]
    ScriptMiss { kind: String, ordinal: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend error: {0}")]
    Backend(String),
}

pub trait CompletionBackend: Send + Sync {
    fn label(&self) -> &str;

    /// Returns the raw model text for `request`.
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn label(&self) -> &str {
        (**self).label()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn delay_for(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Shared entry point for all model calls.
#[derive(Clone)]
pub struct LlmGateway {
    backend: Arc<dyn CompletionBackend>,
    retry: RetryPolicy,
}

impl LlmGateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, retry: RetryPolicy) -> Self {
        Self { backend, retry }
    }

    pub fn from_backend(backend: impl CompletionBackend + 'static) -> Self {
        Self::new(Arc::new(backend), RetryPolicy::none())
    }

    pub fn backend_label(&self) -> &str {
        self.backend.label()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        request.validate()?;
        let started = Instant::now();
        let mut attempt = 0u32;
        loop {
            match self.backend.complete(request) {
                Ok(text) => {
                    if text.is_empty() {
                        tracing::warn!(kind = %request.kind, backend = self.backend.label(), "empty completion");
                    }
                    return Ok(CompletionResult {
                        text,
                        backend_label: self.backend.label().to_owned(),
                        latency: started.elapsed(),
                    });
                }
                Err(err) if err.is_transient() && attempt < self.retry.retries => {
                    let delay = self.retry.delay_for(attempt);
                    tracing::warn!(kind = %request.kind, attempt = attempt + 1, ?delay, error = %err, "retrying completion");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(BackendError::Transport(message)) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err(BackendError::ScriptMiss { kind, ordinal }) => {
                    return Err(GatewayError::ScriptMiss { kind, ordinal })
                }
                Err(other) => return Err(GatewayError::Backend(other.to_string())),
            }
        }
    }
}

impl std::fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmGateway")
            .field("backend", &self.backend.label())
            .field("retry", &self.retry)
            .finish()
    }
}
