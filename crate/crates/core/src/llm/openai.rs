//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use super::{BackendError, ChatMessage, CompletionBackend, CompletionRequest};
use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Environment variable holding the API key unless configured otherwise.
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenAiConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    /// Name of the environment variable carrying the key. Keys never live in config files.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

pub struct OpenAiCompatibleBackend {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiCompatibleBackend {
    /// Reads the key from the environment variable named in `config`.
    pub fn from_env(config: &OpenAiConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: &OpenAiConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
            api_key,
            agent,
        }
    }
}

impl CompletionBackend for OpenAiCompatibleBackend {
    fn label(&self) -> &str {
        "openai-compatible"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let body = WireRequest {
            model: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_output,
        };
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Rejected { status, body });
        }
        let parsed: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| BackendError::BadResponse("no choices".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{GatewayError, LlmGateway, RetryPolicy};
    use std::sync::Arc;

    #[test]
    fn unreachable_endpoint_exhausts_retries() {
        let config = OpenAiConfig {
            endpoint: "http://127.0.0.1:9".into(),
            timeout_secs: 2,
            ..OpenAiConfig::default()
        };
        let backend = OpenAiCompatibleBackend::with_key(&config, Some("test".into()));
        let gateway = LlmGateway::new(
            Arc::new(backend),
            RetryPolicy {
                retries: 2,
                base_delay: Duration::from_millis(1),
                max_delay: Duration::from_millis(2),
            },
        );
        let err = gateway
            .complete(&CompletionRequest::prompt("slot_fill", "hello"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }), "{err:?}");
    }
}
