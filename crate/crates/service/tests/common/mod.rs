//! Helpers shared by the service test targets.
#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use interview_service::{EngineFactory, FileStore, SessionService};
use interview_core::llm::{LlmGateway, OfflineBackend};
use interview_core::{Engine, EngineConfig};
use serde_json::{json, Value};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use tower::ServiceExt;

pub fn questionnaire() -> Value {
    json!({
        "career_development_plans": {"selected": ["Nursing management"]},
        "training_preference": {"venue": "In-hospital", "training_name": "Leadership training"},
        "next_year_preferences": {"selected": ["Continue"]}
    })
}

pub fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn offline_engine() -> Engine {
    Engine::with_gateway(LlmGateway::from_backend(OfflineBackend::new()))
}

pub fn service_with(dir: &Path, engine: Engine) -> Arc<SessionService> {
    Arc::new(SessionService::new(
        FileStore::open(dir).unwrap(),
        EngineFactory::from_engine(engine),
        EngineConfig::default(),
    ))
}

/// Sends one request through the router and decodes the JSON reply.
pub async fn call(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

/// A `serve` process on an ephemeral port.
pub struct ServerProcess {
    child: Child,
    pub base: String,
}

impl ServerProcess {
    pub fn start(data_dir: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_interview"))
            .args(["--backend", "offline", "--data-dir"])
            .arg(data_dir)
            .args(["serve", "--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn interview serve");
        let stdout = child.stdout.take().unwrap();
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected server output {line:?}"))
            .to_owned();
        Self {
            child,
            base: format!("http://{addr}"),
        }
    }

    /// SIGKILL: no shutdown hooks run.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn http(method: &str, url: &str, body: Option<Value>) -> (u16, Value) {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let mut response = match (method, body) {
        ("GET", _) => agent.get(url).call(),
        ("POST", Some(b)) => agent.post(url).send_json(&b),
        ("PATCH", Some(b)) => agent.patch(url).send_json(&b),
        other => panic!("unsupported request {other:?}"),
    }
    .unwrap();
    let status = response.status().as_u16();
    let value = response.body_mut().read_json().unwrap_or(Value::Null);
    (status, value)
}
