//! HTTP session service for the interactive agent loop.
//!
//! Sessions live in memory behind one lock each and are written to disk
//! after every change, so a restarted service picks up where it stopped.
//! Agent calls block on backends and run on the blocking thread pool.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/v1/sessions` | create from `{prompt, strategy}` |
//! | GET | `/v1/sessions` | summaries |
//! | GET | `/v1/sessions/{id}` | full record |
//! | GET | `/v1/sessions/{id}/question` | next action, held until answered |
//! | POST | `/v1/sessions/{id}/answer` | `{answer}` for the pending question |
//! | POST | `/v1/sessions/{id}/edits` | `{edits: [GraphEdit]}` |
//! | POST | `/v1/sessions/{id}/generate` | `{n_seeds}` best-first images |
//! | GET | `/v1/sessions/{id}/graph` | belief graph document |
//! | GET | `/health` | liveness |

mod error;
mod store;

use std::future::Future;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use belief_agent_core::agent::{Action, Agent, Observation, SessionState};
use belief_agent_core::backends::{BackendError, ImageArtifact};
use belief_agent_core::belief_graph::{BeliefGraph, GraphEdit};
use belief_agent_core::metrics::{rank_images, yes_no_question};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ErrorCode};
use store::SessionStore;

/// Environment variable naming the data directory.
pub const ENV_DATA_DIR: &str = "DATA_DIR";
pub const DEFAULT_MAX_SEEDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Upper bound on `n_seeds` for one generate call.
    pub max_seeds: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { max_seeds: DEFAULT_MAX_SEEDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub state: SessionState,
    #[serde(default)]
    pub images: Vec<ImageArtifact>,
    /// Action handed out by the question endpoint and not yet answered.
    #[serde(default)]
    pub pending_action: Option<Action>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

impl SessionRecord {
    fn touch(&mut self) {
        self.updated_at_ms = now_ms().max(self.updated_at_ms);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub strategy: String,
    pub original_prompt: String,
    pub merged_prompt: String,
    pub turns: usize,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    pub prompt: String,
    #[serde(default = "default_strategy")]
    pub strategy: String,
}

fn default_strategy() -> String {
    "mhis".into()
}

#[derive(Debug, Clone, Deserialize)]
pub struct AnswerRequest {
    pub answer: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EditsRequest {
    pub edits: Vec<GraphEdit>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GenerateRequest {
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    /// Best first when a scorer and answered questions are available,
    /// otherwise in seed order.
    pub images: Vec<ImageArtifact>,
    /// Yes/no questions the ranking used.
    pub questions: Vec<String>,
    /// Mean question score per returned image, when ranked.
    pub scores: Vec<f64>,
    /// Seeds whose prompt the generator refused.
    pub blocked: Vec<SeedFailure>,
}

struct Inner {
    agent: Arc<Agent>,
    store: SessionStore,
    config: ServiceConfig,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Opens (or creates) the data directory and loads stored sessions.
    pub fn open(agent: Arc<Agent>, data_dir: &Path, config: ServiceConfig) -> std::io::Result<Self> {
        let store = SessionStore::open(data_dir)?;
        Ok(Self { inner: Arc::new(Inner { agent, store, config }) })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/question", get(next_question))
        .route("/v1/sessions/{id}/answer", post(submit_answer))
        .route("/v1/sessions/{id}/edits", post(submit_edits))
        .route("/v1/sessions/{id}/generate", post(generate))
        .route("/v1/sessions/{id}/graph", get(get_graph))
        .with_state(state)
}

/// Serves until `shutdown` resolves. Every change is already on disk, so
/// stopping needs no flush.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::invalid(format!("request body: {e}")))
}

/// Runs blocking agent work off the async runtime.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::unavailable(format!("worker failed: {e}")))?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn create_session(State(app): State<AppState>, bytes: Bytes) -> Result<Json<SessionRecord>, ApiError> {
    let req: CreateSession = body(&bytes)?;
    if req.prompt.trim().is_empty() {
        return Err(ApiError::invalid("prompt is empty"));
    }
    let agent = Arc::clone(&app.inner.agent);
    agent.strategy(&req.strategy)?;
    let state = blocking(move || Ok(agent.start_session(&req.prompt, &req.strategy)?)).await?;
    let now = now_ms();
    let record = SessionRecord {
        session_id: uuid::Uuid::new_v4().to_string(),
        state,
        images: Vec::new(),
        pending_action: None,
        created_at_ms: now,
        updated_at_ms: now,
    };
    app.inner.store.insert(record.clone())?;
    tracing::info!(session = %record.session_id, "session created");
    Ok(Json(record))
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<SessionSummary>> {
    let mut out = Vec::new();
    for slot in app.inner.store.slots() {
        let r = slot.lock().await;
        out.push(SessionSummary {
            session_id: r.session_id.clone(),
            strategy: r.state.strategy.clone(),
            original_prompt: r.state.original_prompt.clone(),
            merged_prompt: r.state.merged_prompt.clone(),
            turns: r.state.history.len(),
            created_at_ms: r.created_at_ms,
            updated_at_ms: r.updated_at_ms,
        });
    }
    out.sort_by(|a, b| a.created_at_ms.cmp(&b.created_at_ms).then_with(|| a.session_id.cmp(&b.session_id)));
    Json(out)
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionRecord>, ApiError> {
    let slot = app.inner.store.get(&id)?;
    let record = slot.lock().await.clone();
    Ok(Json(record))
}

async fn get_graph(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<BeliefGraph>, ApiError> {
    let slot = app.inner.store.get(&id)?;
    let graph = slot.lock().await.state.graph.clone();
    Ok(Json(graph))
}

/// The pending action if there is one, otherwise a freshly selected one.
/// Repeated calls return the same action until it is answered.
async fn next_question(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Action>, ApiError> {
    let slot = app.inner.store.get(&id)?;
    let mut record = slot.lock().await;
    if let Some(action) = &record.pending_action {
        return Ok(Json(action.clone()));
    }
    let agent = Arc::clone(&app.inner.agent);
    let state = record.state.clone();
    let action = blocking(move || Ok(agent.select_action(&state)?)).await?;
    record.pending_action = Some(action.clone());
    app.inner.store.persist(&record)?;
    Ok(Json(action))
}

async fn submit_answer(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    bytes: Bytes,
) -> Result<Json<SessionRecord>, ApiError> {
    let req: AnswerRequest = body(&bytes)?;
    let slot = app.inner.store.get(&id)?;
    let mut record = slot.lock().await;
    let action = match &record.pending_action {
        Some(a @ Action::AskQuestion { .. }) => a.clone(),
        _ => return Err(ApiError::conflict("no question is waiting for an answer")),
    };
    if req.answer.trim().is_empty() {
        return Err(ApiError::invalid("answer is empty"));
    }
    let agent = Arc::clone(&app.inner.agent);
    let state = record.state.clone();
    let observation = Observation::AnswerText { text: req.answer };
    let next = blocking(move || Ok(agent.transition(&state, &action, &observation)?)).await?;
    if let Some(reason) = next.last_turn().and_then(|t| t.degraded.as_deref()) {
        tracing::warn!(session = %id, reason, "answer applied in degraded mode");
    }
    record.state = next;
    record.pending_action = None;
    record.touch();
    app.inner.store.persist(&record)?;
    Ok(Json(record.clone()))
}

async fn submit_edits(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    bytes: Bytes,
) -> Result<Json<SessionRecord>, ApiError> {
    let req: EditsRequest = body(&bytes)?;
    let slot = app.inner.store.get(&id)?;
    let mut record = slot.lock().await;
    if req.edits.is_empty() {
        return Ok(Json(record.clone()));
    }
    let agent = Arc::clone(&app.inner.agent);
    let state = record.state.clone();
    let next = blocking(move || Ok(agent.apply_edits(&state, &req.edits)?)).await?;
    record.state = next;
    // The graph changed under any question handed out earlier.
    record.pending_action = None;
    record.touch();
    app.inner.store.persist(&record)?;
    Ok(Json(record.clone()))
}

/// Yes/no questions built from every answered question and edit so far.
fn history_questions(state: &SessionState) -> Vec<String> {
    state
        .history
        .iter()
        .filter(|t| t.degraded.is_none() && !t.declarative_summary.trim().is_empty())
        .filter(|t| matches!(t.observation, Observation::AnswerText { .. } | Observation::GraphEdit { .. }))
        .map(|t| yes_no_question(&t.declarative_summary))
        .collect()
}

async fn generate(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    bytes: Bytes,
) -> Result<Json<GenerateResponse>, ApiError> {
    let req: GenerateRequest = body(&bytes)?;
    let max = app.inner.config.max_seeds;
    if req.n_seeds == 0 || req.n_seeds > max {
        return Err(ApiError::invalid(format!("n_seeds must be between 1 and {max}")));
    }
    let slot = app.inner.store.get(&id)?;
    let mut record = slot.lock().await;
    let agent = Arc::clone(&app.inner.agent);
    let state = record.state.clone();
    let response = blocking(move || run_generate(&agent, &state, req.n_seeds, req.base_seed)).await?;
    record.images.extend(response.images.iter().cloned());
    record.touch();
    app.inner.store.persist(&record)?;
    Ok(Json(response))
}

fn run_generate(agent: &Agent, state: &SessionState, n: usize, base_seed: u64) -> Result<GenerateResponse, ApiError> {
    let backends = agent.backends();
    let mut images = Vec::with_capacity(n);
    let mut blocked = Vec::new();
    for i in 0..n as u64 {
        let seed = base_seed.wrapping_add(i);
        match backends.generate_image(&state.merged_prompt, seed) {
            Ok(image) => images.push(image),
            Err(BackendError::ContentBlocked(message)) => blocked.push(SeedFailure { seed, message }),
            Err(e) => return Err(ApiError::unavailable(e.to_string())),
        }
    }
    if images.is_empty() {
        return Err(ApiError::unavailable(format!("all {n} seeds were blocked")));
    }
    let questions = history_questions(state);
    let Some(scorer) = backends.scorer.as_ref().filter(|_| !questions.is_empty()) else {
        return Ok(GenerateResponse { images, questions, scores: Vec::new(), blocked });
    };
    let mut table = Vec::with_capacity(images.len());
    for (i, image) in images.iter().enumerate() {
        let scores = questions
            .iter()
            .map(|q| scorer.score_image(image, q))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ApiError::unavailable(e.to_string()))?;
        table.push((format!("{i:08}"), scores));
    }
    let order = rank_images(&table).map_err(|e| ApiError::unavailable(e.to_string()))?;
    let mut ranked = Vec::with_capacity(images.len());
    let mut means = Vec::with_capacity(images.len());
    for id in order {
        let i: usize = id.parse().expect("ids are indices");
        ranked.push(images[i].clone());
        means.push(table[i].1.iter().sum::<f64>() / questions.len() as f64);
    }
    Ok(GenerateResponse { images: ranked, questions, scores: means, blocked })
}
