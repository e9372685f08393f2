//! HTTP service: chat turns, trace lookup, health, static UI.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use stylebot_core::pipeline::{Engine, Manifest, PipelineTrace};
use stylebot_core::textproc::tokenize;
use tower_http::services::ServeDir;

pub const TRACE_CAPACITY: usize = 1000;

#[derive(Debug, Clone, Deserialize)]
pub struct ChatRequest {
    #[serde(default)]
    pub session_id: String,
    pub utterance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub response: String,
    pub route: String,
    pub turn_id: String,
    pub trace_ref: String,
}

/// Bounded store of the most recent traces.
#[derive(Debug)]
pub struct TraceRing {
    capacity: usize,
    entries: VecDeque<(u64, Arc<PipelineTrace>)>,
}

impl TraceRing {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, turn_id: u64, trace: PipelineTrace) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((turn_id, Arc::new(trace)));
    }

    pub fn get(&self, turn_id: u64) -> Option<Arc<PipelineTrace>> {
        self.entries
            .iter()
            .rev()
            .find(|(id, _)| *id == turn_id)
            .map(|(_, t)| t.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub enum EngineState {
    Loading,
    Ready(Arc<Engine>),
    Failed(String),
}

pub struct AppState {
    pub engine: RwLock<EngineState>,
    pub traces: Mutex<TraceRing>,
    next_turn: AtomicU64,
    manifest: PathBuf,
}

impl AppState {
    pub fn new(manifest: PathBuf) -> Arc<Self> {
        Arc::new(Self {
            engine: RwLock::new(EngineState::Loading),
            traces: Mutex::new(TraceRing::new(TRACE_CAPACITY)),
            next_turn: AtomicU64::new(0),
            manifest,
        })
    }

    pub fn ready(engine: Engine) -> Arc<Self> {
        let state = Self::new(PathBuf::new());
        *state.engine.write().expect("state lock") = EngineState::Ready(Arc::new(engine));
        state
    }

    #[allow(clippy::result_large_err)]
    fn engine(&self) -> Result<Arc<Engine>, Response> {
        match &*self.engine.read().expect("state lock") {
            EngineState::Ready(e) => Ok(e.clone()),
            EngineState::Loading => Err(error(StatusCode::SERVICE_UNAVAILABLE, "engine loading")),
            EngineState::Failed(msg) => Err(error(
                StatusCode::SERVICE_UNAVAILABLE,
                &format!("engine failed to load: {msg}"),
            )),
        }
    }
}

/// Loads the manifest on a blocking thread and publishes the result.
pub async fn load_in_background(state: Arc<AppState>, seed: Option<u64>) {
    let path = state.manifest.clone();
    let loaded = tokio::task::spawn_blocking(move || Manifest::load_engine(&path, seed)).await;
    let next = match loaded {
        Ok(Ok(l)) => {
            tracing::info!("engine ready");
            EngineState::Ready(Arc::new(l.engine))
        }
        Ok(Err(e)) => {
            tracing::error!("loading {} failed: {e}", state.manifest.display());
            EngineState::Failed(e.to_string())
        }
        Err(e) => EngineState::Failed(e.to_string()),
    };
    *state.engine.write().expect("state lock") = next;
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn chat(State(state): State<Arc<AppState>>, body: Result<Json<ChatRequest>, JsonRejection>) -> Response {
    let engine = match state.engine() {
        Ok(e) => e,
        Err(r) => return r,
    };
    let Json(request) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, &e.body_text()),
    };
    let tokens = tokenize(request.utterance.trim());
    if tokens.is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty input");
    }
    let turn_id = state.next_turn.fetch_add(1, Ordering::Relaxed);
    let result = tokio::task::spawn_blocking(move || engine.respond(&tokens, turn_id)).await;
    let (_, trace) = match result {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => return error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    };
    tracing::debug!(session = %request.session_id, turn_id, route = %trace.route.label, "turn");
    let response = ChatResponse {
        response: trace.final_text.clone(),
        route: trace.route.label.clone(),
        turn_id: turn_id.to_string(),
        trace_ref: format!("/api/trace/{turn_id}"),
    };
    state.traces.lock().expect("trace lock").push(turn_id, trace);
    Json(response).into_response()
}

async fn trace(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    if let Err(r) = state.engine() {
        return r;
    }
    let found = id
        .parse::<u64>()
        .ok()
        .and_then(|id| state.traces.lock().expect("trace lock").get(id));
    match found {
        Some(t) => Json(&*t).into_response(),
        None => error(StatusCode::NOT_FOUND, "unknown trace"),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match &*state.engine.read().expect("state lock") {
        EngineState::Ready(engine) => {
            let components: serde_json::Map<String, serde_json::Value> = engine
                .component_summary()
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v.into()))
                .collect();
            let traces = state.traces.lock().expect("trace lock").len();
            Json(json!({ "status": "ready", "components": components, "traces": traces })).into_response()
        }
        EngineState::Loading => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "loading" }))).into_response(),
        EngineState::Failed(msg) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "failed", "error": msg })),
        )
            .into_response(),
    }
}

const INDEX: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>stylebot</title></head>\n<body><h1>stylebot</h1><p>No UI bundle configured. Endpoints: POST /api/chat, GET /api/trace/{id}, GET /api/health.</p></body></html>\n";

async fn index() -> Html<&'static str> {
    Html(INDEX)
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/chat", post(chat))
        .route("/api/trace/{id}", get(trace))
        .route("/api/health", get(health))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    }
}
