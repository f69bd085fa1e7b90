//! HTTP+JSON routes over [`SessionService`].
//!
//! Engine work blocks on model calls, so every handler runs on the blocking pool.

use crate::session::{CreateSessionRequest, ServiceError, SessionService};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use interview_core::report::ShareSelection;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Error body shared by every route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub details: serde_json::Value,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(err: ServiceError) -> Self {
        ApiError(err)
    }
}

fn status_for(err: &ServiceError) -> StatusCode {
    match err {
        ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
        ServiceError::PhaseClosed(_) | ServiceError::WrongPhase { .. } => StatusCode::CONFLICT,
        ServiceError::UnknownEntry(_) | ServiceError::EmptyUtterance | ServiceError::Validation(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        ServiceError::InputTooLong { .. } => StatusCode::PAYLOAD_TOO_LARGE,
        ServiceError::Config(_) => StatusCode::SERVICE_UNAVAILABLE,
        ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        // Storage and backend messages can carry local paths; keep them in the log.
        let message = if status.is_server_error() {
            status.canonical_reason().unwrap_or("server error").to_owned()
        } else {
            self.0.to_string()
        };
        let body = ErrorBody {
            code: self.0.code().to_owned(),
            message,
            details: self.0.details(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(service: Arc<SessionService>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionService) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .expect("session task panicked")
        .map_err(ApiError)
}

fn parse_body<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ServiceError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        ServiceError::Validation(vec![interview_core::questionnaire::FieldIssue {
            path: if path == "." { String::new() } else { path },
            message: e.into_inner().to_string(),
        }])
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceBody {
    text: String,
}

async fn create_session(State(service): State<Arc<SessionService>>, body: Bytes) -> ApiResult<Response> {
    let request = CreateSessionRequest::from_json(&body)?;
    let created = blocking(service, move |s| s.create_session(request)).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn post_utterance(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let UtteranceBody { text } = parse_body(&body)?;
    let reply = blocking(service, move |s| s.post_utterance(&id, &text)).await?;
    Ok(Json(reply).into_response())
}

async fn get_state(State(service): State<Arc<SessionService>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(service, move |s| s.get_state(&id)).await?).into_response())
}

async fn get_slots(State(service): State<Arc<SessionService>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(service, move |s| s.get_slots(&id)).await?).into_response())
}

async fn get_report(State(service): State<Arc<SessionService>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(service, move |s| s.get_report(&id)).await?).into_response())
}

async fn patch_selections(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let selection: ShareSelection = parse_body(&body)?;
    let view = blocking(service, move |s| s.patch_share_selection(&id, &selection)).await?;
    Ok(Json(view).into_response())
}

async fn not_found() -> Response {
    let body = ErrorBody {
        code: "not_found".into(),
        message: "no such route".into(),
        details: serde_json::Value::Null,
    };
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

pub fn router(service: Arc<SessionService>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/utterances", post(post_utterance))
        .route("/sessions/{id}/slots", get(get_slots))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/report/selections", patch(patch_selections))
        .fallback(not_found)
        .with_state(service)
}

/// Serves until the process receives Ctrl-C.
pub async fn serve(service: Arc<SessionService>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    // Printed for scripts that start the server on port 0.
    println!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
