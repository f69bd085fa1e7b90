//! TOML configuration for the service and CLI.
//!
//! ```toml
//! data_dir = "sessions"
//! # templates_dir = "templates/ja"
//!
//! [backend]
//! kind = "openai"            # openai | offline | script
//! endpoint = "https://api.openai.com/v1"
//! api_key_env = "OPENAI_API_KEY"
//! timeout_secs = 60
//!
//! [model]
//! model_id = "gpt-4o-2024-05-13"
//! temperature = 0.1
//!
//! [retry]
//! retries = 2
//! base_delay = 500           # milliseconds
//! max_delay = 8000
//!
//! [engine]
//! fill_threshold = 0.8
//! max_interview_turns = 15
//!
//! [server]
//! bind = "127.0.0.1"
//! port = 8080
//! ```
//!
//! API keys are never read from this file, only from the environment
//! variable named by `api_key_env`.

use interview_core::engine::{Engine, EngineConfig};
use interview_core::llm::{
    LlmGateway, ModelSettings, OfflineBackend, OpenAiCompatibleBackend, OpenAiConfig, RetryPolicy, ScriptedBackend,
};
use interview_core::prompts::{TemplateError, TemplateRegistry};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("cannot load script {path}: {source}")]
    Script {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Templates(#[from] TemplateError),
    #[error("environment variable {0} is not set; the openai backend needs an API key")]
    MissingKey(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[serde(rename = "openai")]
    OpenAi(OpenAiConfig),
    /// Deterministic rule-based stand-in, no network.
    Offline,
    /// Replays a recorded script. Each session gets a fresh copy.
    Script {
        path: PathBuf,
        #[serde(default)]
        strict: bool,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::OpenAi(OpenAiConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Directory of locale template overrides.
    pub templates_dir: Option<PathBuf>,
    pub backend: BackendConfig,
    pub model: ModelSettings,
    pub retry: RetryPolicy,
    pub engine: EngineConfig,
    pub server: ServerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("sessions"),
            templates_dir: None,
            backend: BackendConfig::default(),
            model: ModelSettings::default(),
            retry: RetryPolicy::default(),
            engine: EngineConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn templates(&self) -> Result<TemplateRegistry, ConfigError> {
        Ok(match &self.templates_dir {
            Some(dir) => TemplateRegistry::load_dir(dir, &self.engine.locale)?,
            None => TemplateRegistry::english(),
        })
    }
}

/// Builds engines according to the backend configuration.
#[derive(Clone)]
pub struct EngineFactory {
    source: Source,
}

#[derive(Clone)]
enum Source {
    /// Stateless backends share one engine.
    Shared(Engine),
    /// Scripts keep a cursor, so every session gets its own copy.
    Script {
        path: PathBuf,
        strict: bool,
        templates: Arc<TemplateRegistry>,
        model: ModelSettings,
    },
    MissingKey(String),
}

impl std::fmt::Debug for EngineFactory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.source {
            Source::Shared(engine) => engine.gateway().backend_label().to_owned(),
            Source::Script { path, .. } => format!("script {}", path.display()),
            Source::MissingKey(var) => format!("openai (missing {var})"),
        };
        f.debug_struct("EngineFactory").field("backend", &kind).finish()
    }
}

impl EngineFactory {
    /// Validates the backend settings. A missing API key is only reported
    /// when an engine is requested, so read-only commands work without one.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ConfigError> {
        let templates = Arc::new(config.templates()?);
        let source = match &config.backend {
            BackendConfig::OpenAi(openai) => match std::env::var(&openai.api_key_env).ok().filter(|k| !k.is_empty()) {
                Some(key) => {
                    let backend = OpenAiCompatibleBackend::with_key(openai, Some(key));
                    let gateway = LlmGateway::new(Arc::new(backend), config.retry);
                    Source::Shared(Engine::new(gateway, templates, config.model.clone()))
                }
                None => Source::MissingKey(openai.api_key_env.clone()),
            },
            BackendConfig::Offline => Source::Shared(Engine::new(
                LlmGateway::from_backend(OfflineBackend::new()),
                templates,
                config.model.clone(),
            )),
            BackendConfig::Script { path, strict } => {
                // Fail early on a missing or broken script.
                load_script(path)?;
                Source::Script {
                    path: path.clone(),
                    strict: *strict,
                    templates,
                    model: config.model.clone(),
                }
            }
        };
        Ok(Self { source })
    }

    /// Every session shares `engine`.
    pub fn from_engine(engine: Engine) -> Self {
        Self {
            source: Source::Shared(engine),
        }
    }

    /// Fails when no engine can be built, e.g. the API key is missing.
    pub fn check(&self) -> Result<(), ConfigError> {
        self.engine().map(drop)
    }

    /// An engine for one session or one simulated dialogue.
    pub fn engine(&self) -> Result<Engine, ConfigError> {
        match &self.source {
            Source::Shared(engine) => Ok(engine.clone()),
            Source::MissingKey(var) => Err(ConfigError::MissingKey(var.clone())),
            Source::Script {
                path,
                strict,
                templates,
                model,
            } => {
                let mut backend = load_script(path)?;
                if *strict {
                    backend = backend.strict();
                }
                Ok(Engine::new(LlmGateway::from_backend(backend), templates.clone(), model.clone()))
            }
        }
    }

    /// Whether each call to [`engine`](Self::engine) yields independent backend state.
    pub fn per_session(&self) -> bool {
        matches!(self.source, Source::Script { .. })
    }
}

fn load_script(path: &Path) -> Result<ScriptedBackend, ConfigError> {
    ScriptedBackend::load(path).map_err(|source| ConfigError::Script {
        path: path.display().to_string(),
        source,
    })
}
