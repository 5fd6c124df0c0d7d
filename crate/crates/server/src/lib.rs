//! HTTP/JSON front end for [`coach_core::chat::ChatEngine`].
//!
//! Engine calls block (retrieval, provider HTTP), so every handler runs them
//! on tokio's blocking pool.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coach_core::chat::{ChatEngine, ChatError, Session, SessionSummary, SummaryTurn};
use coach_core::ensemble::Source;
use coach_core::generation::PersonaConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error_code: &'static str,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn invalid(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "invalid_body",
            message: message.into(),
        }
    }
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        let (status, code) = match &e {
            ChatError::NotFound(_) => (StatusCode::NOT_FOUND, "session_not_found"),
            ChatError::InvalidInput(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_input"),
            ChatError::UnknownProvider(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_provider"),
            ChatError::IndexNotReady => (StatusCode::SERVICE_UNAVAILABLE, "index_not_ready"),
            ChatError::Provider(_) => (StatusCode::BAD_GATEWAY, "provider_error"),
            ChatError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_error"),
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error_code: self.code,
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body; an empty body yields `T::default()`.
fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(e.to_string()))
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ChatError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        })?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub persona: PersonaConfig,
    pub rag_enabled: bool,
    pub provider_id: Option<String>,
}

impl Default for CreateSession {
    fn default() -> Self {
        CreateSession {
            persona: PersonaConfig::default(),
            rag_enabled: true,
            provider_id: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateSession {
    pub persona: Option<PersonaConfig>,
    pub rag_enabled: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostMessage {
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ContextView {
    pub chunk_id: String,
    pub doc_id: String,
    pub heading_path: Vec<String>,
    pub fused_score: f64,
    pub rank: usize,
    pub sources: Vec<Source>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply: String,
    pub contexts: Vec<ContextView>,
    pub latency_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval_fallback: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryReply {
    /// `None` when the history is below the summarization threshold.
    pub summary: Option<SummaryTurn>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub corpus_chunks: usize,
    pub index_ready: bool,
}

#[derive(Clone)]
struct AppState {
    engine: Arc<ChatEngine>,
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        corpus_chunks: s.engine.corpus_chunks(),
        index_ready: s.engine.index_ready(),
    })
}

async fn create_session(
    State(s): State<AppState>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Session>)> {
    let req: CreateSession = parse_body(&body)?;
    let session = blocking(move || {
        s.engine
            .create_session(req.persona, req.rag_enabled, req.provider_id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(session)))
}

async fn list_sessions(State(s): State<AppState>) -> ApiResult<Json<Vec<SessionSummary>>> {
    Ok(Json(blocking(move || s.engine.list_sessions()).await?))
}

async fn get_session(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Session>> {
    Ok(Json(blocking(move || s.engine.get_session(&id)).await?))
}

async fn update_session(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Session>> {
    let req: UpdateSession = parse_body(&body)?;
    Ok(Json(
        blocking(move || s.engine.update_session(&id, req.persona, req.rag_enabled)).await?,
    ))
}

async fn delete_session(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    blocking(move || s.engine.delete_session(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_message(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<MessageReply>> {
    let req: PostMessage = parse_body(&body)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::invalid("text must be a non-empty string"));
    }
    let turn = blocking(move || s.engine.post_message(&id, &req.text)).await?;
    Ok(Json(MessageReply {
        reply: turn.text,
        contexts: turn
            .contexts_used
            .into_iter()
            .map(|c| ContextView {
                chunk_id: c.chunk_id,
                doc_id: c.doc_id,
                heading_path: c.heading_path,
                fused_score: c.fused_score,
                rank: c.rank,
                sources: c.sources.into_iter().collect(),
            })
            .collect(),
        latency_ms: turn.latency_ms,
        retrieval_fallback: turn.retrieval_fallback,
    }))
}

async fn summarize(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SummaryReply>> {
    let summary = blocking(move || s.engine.summarize(&id)).await?;
    Ok(Json(SummaryReply { summary }))
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such route".into(),
    }
}

pub fn router(engine: Arc<ChatEngine>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route(
            "/api/sessions/{id}",
            get(get_session)
                .patch(update_session)
                .delete(delete_session),
        )
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/summarize", post(summarize))
        .fallback(not_found)
        .with_state(AppState { engine })
}

/// Serves until `shutdown` resolves. Reports the bound address through `on_bound`
/// (useful with port 0).
pub async fn serve(
    engine: Arc<ChatEngine>,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C.
pub async fn ctrl_c() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        log::error!("cannot listen for ctrl-c: {e}");
        std::future::pending::<()>().await;
    }
}
