//! HTTP front end for the agent service.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/health` | | `{"status":"ok"}` |
//! | GET | `/tasks` | | task summaries |
//! | GET | `/tasks/{a_id}` | | full task definition |
//! | GET | `/sessions` | | session views |
//! | POST | `/sessions` | `{task, method?, sop_source?, seed?}` | session view and opening turn |
//! | GET | `/sessions/{id}` | | session view |
//! | POST | `/sessions/{id}/messages` | `{text}` | turn index, decision, session view |
//! | GET | `/sessions/{id}/trace/{turn}` | | transcript record with the planner trace |
//! | GET | `/sessions/{id}/transcript` | | JSONL transcript |
//!
//! When a token is configured every route except `/health` needs
//! `Authorization: Bearer <token>`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sopplan_core::online::PlannerMethod;
use sopplan_core::service::{AgentService, CreateSession, ServiceError, SopSource};
use tower_http::cors::CorsLayer;

/// Environment variable holding the bearer token.
pub const TOKEN_ENV: &str = "SOPPLAN_TOKEN";

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<AgentService>,
    pub token: Option<String>,
}

impl AppState {
    pub fn new(service: AgentService) -> Self {
        AppState {
            service: Arc::new(service),
            token: None,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    /// Token from [`TOKEN_ENV`], if set and non-empty.
    pub fn with_env_token(self) -> Self {
        self.with_token(std::env::var(TOKEN_ENV).ok())
    }
}

/// JSON error body: `{"error": kind, "message": text}`.
#[derive(Debug)]
pub struct ApiError(StatusCode, &'static str, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1, "message": self.2}))).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, kind) = match &e {
            ServiceError::UnknownTask(_) => (StatusCode::NOT_FOUND, "unknown_task"),
            ServiceError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ServiceError::UnknownTurn { .. } => (StatusCode::NOT_FOUND, "unknown_turn"),
            ServiceError::InvalidConfig(_) => (StatusCode::BAD_REQUEST, "invalid_config"),
            ServiceError::SessionClosed(_) => (StatusCode::CONFLICT, "session_closed"),
            ServiceError::Planner { .. } => (StatusCode::BAD_GATEWAY, "planner_failed"),
            ServiceError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        ApiError(status, kind, e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, "bad_request", msg.into())
}

/// Runs blocking service work (backend calls) off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

/// Lenient method names: `MCTS_SOP`, `mcts-sop`, `mctssop` all work.
#[derive(Debug, Default, Deserialize)]
pub struct CreateBody {
    pub task: String,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub sop_source: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl CreateBody {
    fn into_request(self) -> Result<CreateSession, ApiError> {
        let method = self
            .method
            .map(|m| m.parse::<PlannerMethod>())
            .transpose()
            .map_err(bad_request)?;
        let sop_source = self
            .sop_source
            .map(|s| s.parse::<SopSource>())
            .transpose()
            .map_err(bad_request)?;
        Ok(CreateSession {
            task: self.task,
            method,
            sop_source,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageBody {
    pub text: String,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn list_tasks(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.service.list_tasks())
}

async fn get_task(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let task = s.service.task(&id)?;
    Ok(Json(task.to_json()).into_response())
}

async fn list_sessions(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.service.list_sessions())
}

async fn create_session(State(s): State<AppState>, body: Result<Json<CreateBody>, axum::extract::rejection::JsonRejection>) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| bad_request(e.body_text()))?;
    let req = body.into_request()?;
    let svc = s.service.clone();
    let created = blocking(move || svc.create_session(&req)).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn get_session(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.service.get_session(&id)?).into_response())
}

async fn post_message(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| bad_request(e.body_text()))?;
    if body.text.trim().is_empty() {
        return Err(bad_request("text must not be empty"));
    }
    let svc = s.service.clone();
    let turn = blocking(move || svc.post_user_message(&id, &body.text)).await?;
    Ok(Json(turn).into_response())
}

async fn get_trace(State(s): State<AppState>, Path((id, turn)): Path<(String, usize)>) -> Result<Response, ApiError> {
    Ok(Json(s.service.get_trace(&id, turn)?).into_response())
}

async fn get_transcript(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = s.service.export_transcript(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn auth(State(s): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &s.token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token".into())
                .into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/tasks", get(list_tasks))
        .route("/tasks/{id}", get(get_task))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/trace/{turn}", get(get_trace))
        .route("/sessions/{id}/transcript", get(get_transcript))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new()
        .route("/health", get(health))
        .merge(api)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
