use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;

use super::{Answer, JudgingError, JudgmentStore, Progress};
use crate::config::Phase;
use crate::pool::{JurorItem, TokenRegistry};

struct AppState {
    store: Arc<JudgmentStore>,
    tokens: TokenRegistry,
}

type Shared = State<Arc<AppState>>;

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<JudgingError> for ApiError {
    fn from(e: JudgingError) -> Self {
        let (status, code) = match &e {
            JudgingError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            JudgingError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
            JudgingError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            JudgingError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            JudgingError::Io { .. } | JudgingError::Corrupt { .. } => {
                log::error!("{e}");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

fn bearer(headers: &HeaderMap, query: &TokenQuery) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .or_else(|| query.token.clone())
}

fn participant(state: &AppState, headers: &HeaderMap, query: &TokenQuery) -> Result<String, ApiError> {
    let token = bearer(headers, query)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing token"))?;
    state
        .tokens
        .participant_for(&token)
        .map(str::to_string)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "unknown token"))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, JudgingError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Serialize)]
struct PoolSummary {
    pool_id: String,
    task_id: String,
    progress: Progress,
}

async fn list_pools(
    State(state): Shared,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> Result<Json<Vec<PoolSummary>>, ApiError> {
    let who = participant(&state, &headers, &q)?;
    let mut out = Vec::new();
    for pool in state.store.pools().filter(|p| p.participant_id == who) {
        out.push(PoolSummary {
            pool_id: pool.pool_id.clone(),
            task_id: pool.task_id.clone(),
            progress: state.store.progress(&pool.pool_id, &who)?,
        });
    }
    Ok(Json(out))
}

#[derive(Serialize)]
struct NextResponse {
    done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    item: Option<JurorItem>,
    progress: Progress,
}

async fn next_item(
    State(state): Shared,
    Path(pool_id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> Result<Json<NextResponse>, ApiError> {
    let who = participant(&state, &headers, &q)?;
    let (item, progress) = state.store.next_item(&pool_id, &who)?;
    Ok(Json(NextResponse {
        done: item.is_none(),
        item,
        progress,
    }))
}

async fn progress(
    State(state): Shared,
    Path(pool_id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> Result<Json<Progress>, ApiError> {
    let who = participant(&state, &headers, &q)?;
    Ok(Json(state.store.progress(&pool_id, &who)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgmentBody {
    item_id: String,
    binary: bool,
    graded: i64,
}

async fn submit_judgment(
    State(state): Shared,
    Path(pool_id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    body: Result<Json<JudgmentBody>, JsonRejection>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let who = participant(&state, &headers, &q)?;
    let Json(body) = body?;
    let store = state.store.clone();
    let judgment = blocking(move || {
        store.submit_judgment(&pool_id, &who, &body.item_id, body.binary, body.graded)
    })
    .await?;
    let progress = state.store.progress(&judgment.pool_id, &judgment.participant_id)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "status": "recorded",
            "item_id": judgment.item_id,
            "judged_at": judgment.judged_at,
            "progress": progress,
        })),
    ))
}

#[derive(Serialize)]
struct QuestionnaireItemView {
    item_id: String,
    prompt: String,
    answer_kind: crate::config::AnswerKind,
}

async fn questionnaire_items(
    State(state): Shared,
    Path(phase): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> Result<Json<Vec<QuestionnaireItemView>>, ApiError> {
    participant(&state, &headers, &q)?;
    let phase = Phase::parse(&phase)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("phase {phase}")))?;
    Ok(Json(
        state
            .store
            .config()
            .questionnaire(phase)
            .iter()
            .map(|i| QuestionnaireItemView {
                item_id: i.item_id.clone(),
                prompt: i.prompt.clone(),
                answer_kind: i.answer_kind,
            })
            .collect(),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionnaireBody {
    task_id: String,
    phase: Phase,
    answers: BTreeMap<String, Answer>,
}

async fn submit_questionnaire(
    State(state): Shared,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    body: Result<Json<QuestionnaireBody>, JsonRejection>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let who = participant(&state, &headers, &q)?;
    let Json(body) = body?;
    let store = state.store.clone();
    let response =
        blocking(move || store.submit_questionnaire(&who, &body.task_id, body.phase, body.answers))
            .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "status": "recorded", "submitted_at": response.submitted_at })),
    ))
}

async fn admin_export(
    State(state): Shared,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let token = bearer(&headers, &q)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing token"))?;
    if state.tokens.admin_token.is_empty() || token != state.tokens.admin_token {
        let status = if state.tokens.participant_for(&token).is_some() {
            StatusCode::FORBIDDEN
        } else {
            StatusCode::UNAUTHORIZED
        };
        return Err(ApiError::new(status, "unauthorized", "researcher token required"));
    }
    Ok(Json(json!({
        "judgments": state.store.judgments(),
        "questionnaires": state.store.questionnaires(),
    })))
}

/// Routes under the `/v1` prefix. Juror endpoints take a participant token
/// as `Authorization: Bearer <token>` or `?token=<token>`.
pub fn router(store: Arc<JudgmentStore>, tokens: TokenRegistry) -> Router {
    let state = Arc::new(AppState { store, tokens });
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/pools", get(list_pools))
        .route("/v1/pools/{pool_id}/next", get(next_item))
        .route("/v1/pools/{pool_id}/progress", get(progress))
        .route("/v1/pools/{pool_id}/judgments", post(submit_judgment))
        .route("/v1/questionnaires/{phase}", get(questionnaire_items))
        .route("/v1/questionnaires", post(submit_questionnaire))
        .route("/v1/admin/export", get(admin_export))
        .with_state(state)
}

pub async fn serve(
    store: Arc<JudgmentStore>,
    tokens: TokenRegistry,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store, tokens))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_and_join()
    }

    fn shutdown_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}

pub fn spawn_server(
    store: Arc<JudgmentStore>,
    tokens: TokenRegistry,
    addr: SocketAddr,
) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = thread::Builder::new()
        .name("judgment-server".into())
        .spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                serve(store, tokens, listener, async {
                    let _ = rx.await;
                })
                .await
            })
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
