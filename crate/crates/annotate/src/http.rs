//! JSON-over-HTTP front end for [`AnnotationService`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::service::{AnnotationService, SubmitError, Submission};

/// Header naming the annotator session.
pub const SESSION_HEADER: &str = "x-session";

fn session(headers: &HeaderMap) -> Result<String, Response> {
    headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| (StatusCode::BAD_REQUEST, Json(json!({"error": "missing X-Session header"}))).into_response())
}

async fn next_task(State(service): State<Arc<AnnotationService>>, headers: HeaderMap) -> Response {
    let session = match session(&headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    match service.next_task(&session) {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit(
    State(service): State<Arc<AnnotationService>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<Submission>, JsonRejection>,
) -> Response {
    let session = match session(&headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    // 422 is reserved for rule failures, so every unreadable body is a 400
    let body = match body {
        Ok(Json(b)) => b,
        Err(e) => return (StatusCode::BAD_REQUEST, Json(json!({ "error": e.body_text() }))).into_response(),
    };
    let result = tokio::task::spawn_blocking(move || service.submit(&id, &session, body)).await;
    match result {
        Ok(Ok(outcome)) => {
            let code = if outcome.accepted { StatusCode::OK } else { StatusCode::UNPROCESSABLE_ENTITY };
            (code, Json(json!({ "report": outcome.report }))).into_response()
        }
        Ok(Err(e)) => {
            let code = match e {
                SubmitError::NotFound(_) => StatusCode::NOT_FOUND,
                SubmitError::Conflict(_) => StatusCode::CONFLICT,
                SubmitError::Malformed(_) => StatusCode::BAD_REQUEST,
                SubmitError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
            };
            (code, Json(json!({ "error": e.to_string() }))).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

async fn progress(State(service): State<Arc<AnnotationService>>) -> Response {
    Json(service.progress()).into_response()
}

/// The API routes, plus static files from `assets` under `/` when given.
pub fn router(service: Arc<AnnotationService>, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/tasks/{id}", post(submit))
        .route("/api/progress", get(progress))
        .with_state(service);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
