//! HTTP JSON API, version 1.
//!
//! | route                                 | result                         |
//! |---------------------------------------|--------------------------------|
//! | `POST /v1/sessions`                   | `{session_id, created}`        |
//! | `POST /v1/sessions/{id}/turns`        | `{outcome, message, pending?, error?, graph}` |
//! | `GET /v1/sessions/{id}/graph`         | graph snapshot                 |
//! | `GET /v1/sessions/{id}/graph.dot`     | Graphviz text (`?turn=n` for one turn) |
//! | `DELETE /v1/sessions/{id}`            | 204                            |
//!
//! Errors are `{"error": {"code", "message"}}`. Each session runs one turn at
//! a time; a turn sent while another is running gets 409 unless the server
//! was started to wait.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dataflow_dialogue::graph::{ExceptionRecord, GraphSnapshot};
use dataflow_dialogue::{Engine, GraphContext, Outcome, Syntax};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

use crate::Setup;

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub setup: Setup,
    pub wait_when_busy: bool,
}

struct Session {
    ctx: Arc<AsyncMutex<GraphContext>>,
    #[allow(dead_code)]
    created: u64,
}

struct Inner {
    engine: Engine,
    config: ServerConfig,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        AppState(Arc::new(Inner {
            engine: Engine::new(),
            config,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }))
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.0
            .sessions
            .lock()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}")))
    }

    /// Holds a session's context as a running turn would. Embedders use it
    /// to inspect a live session; tests use it to provoke 409s.
    pub async fn lock_session(&self, id: &str) -> Option<OwnedMutexGuard<GraphContext>> {
        let s = self.session(id).ok()?;
        Some(s.ctx.clone().lock_owned().await)
    }
}

pub fn router(config: ServerConfig) -> Router {
    router_with_state(AppState::new(config))
}

pub fn router_with_state(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", axum::routing::delete(delete_session))
        .route("/v1/sessions/{id}/turns", post(post_turn))
        .route("/v1/sessions/{id}/graph", get(get_graph))
        .route("/v1/sessions/{id}/graph.dot", get(get_dot))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route".into()) })
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: String) -> Self {
        ApiError { status, code, message }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    /// Unix seconds.
    pub created: u64,
}

async fn create_session(State(state): State<AppState>) -> (StatusCode, Json<CreatedSession>) {
    let n = state.0.next_id.fetch_add(1, Ordering::Relaxed);
    let session_id = format!("s{n}");
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let ctx = Arc::new(AsyncMutex::new(state.0.config.setup.context()));
    state
        .0
        .sessions
        .lock()
        .expect("session table poisoned")
        .insert(session_id.clone(), Arc::new(Session { ctx, created }));
    (StatusCode::CREATED, Json(CreatedSession { session_id, created }))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match state.0.sessions.lock().expect("session table poisoned").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRequest {
    pub text: String,
    #[serde(default)]
    pub syntax: Option<Syntax>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnResponse {
    /// `success`, `pending` or `failed`.
    pub outcome: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<ExceptionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    pub graph: GraphSnapshot,
}

fn turn_response(outcome: &Outcome, ctx: &GraphContext) -> TurnResponse {
    let (kind, message, pending, error) = match outcome {
        Outcome::Success { message, .. } => ("success", message.clone(), None, None),
        Outcome::Pending(e) => ("pending", e.prompt.clone(), Some(e.clone()), None),
        Outcome::Failed(e) => {
            ("failed", e.to_string(), None, Some(ErrorBody { code: e.code().to_string(), message: e.to_string() }))
        }
    };
    TurnResponse { outcome: kind.to_string(), message, pending, error, graph: ctx.snapshot() }
}

async fn post_turn(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<TurnRequest>, JsonRejection>,
) -> Result<Json<TurnResponse>, ApiError> {
    let session = state.session(&id)?;
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let mut guard = if state.0.config.wait_when_busy {
        session.ctx.clone().lock_owned().await
    } else {
        session.ctx.clone().try_lock_owned().map_err(|_| {
            ApiError::new(StatusCode::CONFLICT, "turn_in_progress", "a turn is still running in this session".into())
        })?
    };
    let syntax = req.syntax.unwrap_or(state.0.config.setup.syntax);
    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = worker.0.engine.run_turn(&req.text, syntax, &mut guard);
        turn_response(&outcome, &guard)
    })
    .await
    .map(Json)
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

async fn get_graph(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<GraphSnapshot>, ApiError> {
    let session = state.session(&id)?;
    let ctx = session.ctx.lock().await;
    Ok(Json(ctx.snapshot()))
}

#[derive(Debug, Deserialize)]
struct DotQuery {
    turn: Option<usize>,
}

async fn get_dot(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<DotQuery>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let ctx = session.ctx.lock().await;
    let dot =
        ctx.export_dot(q.turn).map_err(|e| ApiError::new(StatusCode::NOT_FOUND, "unknown_turn", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")], dot).into_response())
}
