use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use labelaudit_core::review::{NewSession, Resolution, ReviewStore, SessionHeader, Submission, Verdict};
use labelaudit_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::error::{CliError, CliResult};

const PLACEHOLDER: &str = "<!doctype html>\n<html><head><title>labelaudit review</title></head>\
<body><h1>labelaudit review service</h1><p>The API is served under <code>/api/sessions</code>. \
Start the service with <code>--static-dir</code> to serve the review frontend here.</p></body></html>\n";

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.0.to_string();
        let (status, body) = match self.0 {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, json!({ "error": message })),
            Error::Conflict { latest } => {
                (StatusCode::CONFLICT, json!({ "error": message, "latest": latest }))
            }
            Error::Invalid(_) => (StatusCode::BAD_REQUEST, json!({ "error": message })),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": message })),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub header: SessionHeader,
    pub event_count: usize,
    pub pending: usize,
    pub complete: bool,
}

#[derive(Debug, Deserialize)]
pub struct ItemsQuery {
    pub status: Option<Verdict>,
    pub annotator: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct ExportRequest {
    pub resolution: Option<Resolution>,
}

pub fn router(store: Arc<ReviewStore>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sessions", get(list_sessions).post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/items", get(list_items))
        .route("/api/sessions/{id}/adjudications", post(submit))
        .route("/api/sessions/{id}/iaa", get(iaa))
        .route("/api/sessions/{id}/export", post(export))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

pub async fn serve(store: Arc<ReviewStore>, static_dir: Option<PathBuf>, port: u16) -> CliResult<()> {
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::usage(format!("cannot bind {addr}: {e}")))?;
    eprintln!("labelaudit: review service on http://{addr}");
    axum::serve(listener, router(store, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::data(format!("server error: {e}")))
}

async fn list_sessions(State(store): State<Arc<ReviewStore>>) -> Json<Vec<String>> {
    Json(store.session_ids())
}

async fn create_session(
    State(store): State<Arc<ReviewStore>>,
    Json(req): Json<NewSession>,
) -> ApiResult<(StatusCode, Json<SessionHeader>)> {
    let header = store.create_session(&req.ledger, &req.annotator_ids)?;
    Ok((StatusCode::CREATED, Json(header)))
}

async fn get_session(
    State(store): State<Arc<ReviewStore>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSummary>> {
    let state = store.snapshot(&id)?;
    Ok(Json(SessionSummary {
        pending: state.pending().len(),
        complete: state.is_complete(),
        event_count: state.event_count,
        header: state.header,
    }))
}

async fn list_items(
    State(store): State<Arc<ReviewStore>>,
    Path(id): Path<String>,
    Query(q): Query<ItemsQuery>,
) -> ApiResult<Response> {
    let state = store.snapshot(&id)?;
    if let Some(a) = &q.annotator {
        if !state.header.annotator_ids.contains(a) {
            return Err(Error::NotFound(format!("annotator {a:?} not in session {id:?}")).into());
        }
    }
    Ok(Json(state.item_views(q.status, q.annotator.as_deref())).into_response())
}

async fn submit(
    State(store): State<Arc<ReviewStore>>,
    Path(id): Path<String>,
    Json(sub): Json<Submission>,
) -> ApiResult<Response> {
    let adj = store.submit(&id, sub)?;
    Ok((StatusCode::CREATED, Json(adj)).into_response())
}

async fn iaa(State(store): State<Arc<ReviewStore>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(store.iaa(&id)?).into_response())
}

async fn export(
    State(store): State<Arc<ReviewStore>>,
    Path(id): Path<String>,
    body: Option<Json<ExportRequest>>,
) -> ApiResult<Response> {
    let resolution = body
        .and_then(|Json(r)| r.resolution)
        .unwrap_or(Resolution::ConsensusOnly);
    let (bundle, _) = store.export(&id, resolution)?;
    Ok(Json(bundle).into_response())
}
