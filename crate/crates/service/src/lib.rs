//! HTTP API over the dialogue engine: document ingestion, sessions,
//! messages and health, plus optional static hosting of the web client.

mod config;
mod error;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use docbot::candidates::CandidateKind;
use docbot::chitchat::{load_canned, default_canned, ChitChat, Seq2SeqModel};
use docbot::dialogue::{DialogueManager, Origin, Scorer, SessionSnapshot};
use docbot::docstore::DocStore;
use docbot::matcher::MatcherModel;
use docbot::text::TextPipeline;

pub use config::{ConfigError, ServiceConfig};
pub use error::ApiError;

/// Slack on top of the document cap for the JSON envelope and escapes.
const ENVELOPE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone)]
pub struct AppState {
    pub manager: Arc<DialogueManager>,
    pub max_document_bytes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRequest {
    #[serde(default)]
    pub title: Option<String>,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestResponse {
    pub doc_id: String,
    pub n_sentences: usize,
    pub n_triples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub doc_ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceItem {
    pub text: String,
    pub kind: CandidateKind,
    pub score: f64,
    pub doc_id: String,
    pub sentence_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageResponse {
    pub reply: String,
    pub origin: Origin,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub trace: Vec<TraceItem>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_loaded: bool,
    pub chitchat_model_loaded: bool,
    pub index_docs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigResponse {
    pub score_threshold: f64,
    pub retrieval_k: usize,
    pub max_utterances: usize,
    pub include_bot_turns: bool,
    pub max_document_bytes: usize,
}

/// Reads the whole body under `limit` and parses it as JSON.
async fn json_body<T: DeserializeOwned>(body: Body, limit: usize) -> Result<T, ApiError> {
    let bytes = axum::body::to_bytes(body, limit)
        .await
        .map_err(|_| ApiError::payload_too_large(limit))?;
    if bytes.is_empty() {
        return Err(ApiError::bad_request("request body is empty"));
    }
    serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

/// Runs CPU-bound engine work off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> docbot::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

async fn ingest(State(state): State<AppState>, body: Body) -> Result<Json<IngestResponse>, ApiError> {
    let req: IngestRequest = json_body(body, state.max_document_bytes + ENVELOPE_BYTES).await?;
    if req.text.trim().is_empty() {
        return Err(ApiError::bad_request("document text is empty"));
    }
    if req.text.len() > state.max_document_bytes {
        return Err(ApiError::payload_too_large(state.max_document_bytes));
    }
    let docs = state.manager.documents().clone();
    let doc = blocking(move || docs.ingest(req.title, &req.text)).await?;
    Ok(Json(IngestResponse {
        doc_id: doc.meta.doc_id.clone(),
        n_sentences: doc.meta.n_sentences,
        n_triples: doc.meta.n_triples,
    }))
}

async fn create_session(State(state): State<AppState>, body: Body) -> Result<Json<CreateSessionResponse>, ApiError> {
    let req: CreateSessionRequest = json_body(body, ENVELOPE_BYTES).await?;
    let manager = state.manager.clone();
    let snapshot = blocking(move || manager.create_session(req.doc_ids)).await?;
    Ok(Json(CreateSessionResponse {
        session_id: snapshot.session_id,
    }))
}

async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Body,
) -> Result<Json<MessageResponse>, ApiError> {
    let req: MessageRequest = json_body(body, ENVELOPE_BYTES).await?;
    if req.text.trim().is_empty() {
        return Err(ApiError::bad_request("message text is empty"));
    }
    let manager = state.manager.clone();
    let d = blocking(move || manager.handle_message(&id, &req.text)).await?;
    Ok(Json(MessageResponse {
        reply: d.reply,
        origin: d.origin,
        score: d.score,
        trace: d
            .candidate_trace
            .into_iter()
            .map(|t| TraceItem {
                text: t.text,
                kind: t.kind,
                score: t.score,
                doc_id: t.doc_id,
                sentence_index: t.sentence_index,
            })
            .collect(),
    }))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSnapshot>, ApiError> {
    Ok(Json(state.manager.session(&id)?))
}

async fn health(State(state): State<AppState>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        model_loaded: state.manager.matcher_loaded(),
        chitchat_model_loaded: state.manager.chitchat_loaded(),
        index_docs: state.manager.documents().len(),
    })
}

async fn get_config(State(state): State<AppState>) -> Json<ConfigResponse> {
    let c = state.manager.config();
    Json(ConfigResponse {
        score_threshold: c.score_threshold,
        retrieval_k: c.retrieval.k,
        max_utterances: c.max_utterances,
        include_bot_turns: c.include_bot_turns,
        max_document_bytes: state.max_document_bytes,
    })
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed")
}

/// The `/api` routes, with `static_dir` (when given) served under `/`.
pub fn router(state: AppState, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/documents", post(ingest))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/health", get(health))
        .route("/config", get(get_config))
        .fallback(api_not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    }
}

/// Builds the engine from `config`: opens the data directory and loads the
/// models that are configured. A configured model file that does not exist
/// is skipped with a warning; one that fails to parse is an error.
pub fn build_state(config: &ServiceConfig) -> anyhow::Result<AppState> {
    let docs = Arc::new(DocStore::open(&config.data_dir, TextPipeline::default())?);
    let scorer: Option<Arc<dyn Scorer>> = match &config.matcher_model {
        Some(p) if p.exists() => Some(Arc::new(MatcherModel::load(p)?)),
        Some(p) => {
            tracing::warn!(path = %p.display(), "matcher model not found; replying with chit-chat only");
            None
        }
        None => None,
    };
    let seq2seq = match &config.chitchat_model {
        Some(p) if p.exists() => Some(Seq2SeqModel::load(p)?),
        Some(p) => {
            tracing::warn!(path = %p.display(), "chit-chat model not found; using canned replies");
            None
        }
        None => None,
    };
    let canned = match &config.canned_responses {
        Some(p) => load_canned(p)?,
        None => default_canned(),
    };
    let chitchat = Arc::new(ChitChat::new(seq2seq, config.dialogue.decode, canned)?);
    let manager = DialogueManager::new(docs, scorer, chitchat, config.dialogue.clone())?;
    Ok(AppState {
        manager: Arc::new(manager),
        max_document_bytes: config.max_document_bytes,
    })
}

/// Periodically drops sessions idle for longer than `ttl`.
pub fn spawn_session_sweeper(manager: Arc<DialogueManager>, ttl: Duration, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.tick().await;
        loop {
            tick.tick().await;
            let removed = manager.expire_idle(ttl);
            if removed > 0 {
                tracing::info!(removed, "expired idle sessions");
            }
        }
    })
}

/// Serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let state = build_state(&config)?;
    tracing::info!(
        docs = state.manager.documents().len(),
        matcher = state.manager.matcher_loaded(),
        chitchat = state.manager.chitchat_loaded(),
        "engine ready"
    );
    let sweeper = spawn_session_sweeper(
        state.manager.clone(),
        Duration::from_secs(config.session_ttl_secs),
        Duration::from_secs(config.sweep_interval_secs),
    );
    let app = router(state, config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    sweeper.abort();
    Ok(())
}
