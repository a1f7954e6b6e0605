//! HTTP API over a single session: one model, one current scene.
//!
//! Mutations (`POST /scene`, `POST /act`) take the writer lock, build a new
//! immutable [`Session`] and swap it in; reads clone the current `Arc` and
//! never wait on a mutation in progress. Explanation bodies are cached per
//! (scene digest, request) and the cache is cleared whenever the scene
//! changes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use rdqmap_core::canonical_json;
use rdqmap_core::explain::{explain_with, ExplainError, ExplainRequest, ExplanationBundle};
use rdqmap_core::llm::{build_prompt_with_palette, ChatClientConfig, ChatError, PromptBundle};
use rdqmap_core::qmap::{composite, select_global, QMapSet};
use rdqmap_core::scene::{self, Action, GridScene, Pixel, RewardVector, Scenario, ScenarioConfig, SceneError, SceneFile, StepInfo, StepOutcome};

use crate::model::Model;
use crate::{remote, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: Action,
    pub reward: RewardVector,
    pub info: StepInfo,
}

/// Immutable view of the session after the last mutation.
#[derive(Debug, Clone)]
pub struct Session {
    pub scene: GridScene,
    pub digest: String,
    pub qmaps: QMapSet,
    pub history: Vec<HistoryEntry>,
}

struct Conversation {
    digest: String,
    prompt: PromptBundle,
}

pub struct AppState {
    model: Model,
    scenario: ScenarioConfig,
    chat: ChatClientConfig,
    writer: tokio::sync::Mutex<()>,
    current: RwLock<Option<Arc<Session>>>,
    cache: Mutex<HashMap<(String, String), Arc<String>>>,
    conversation: tokio::sync::Mutex<Option<Conversation>>,
}

impl AppState {
    pub fn new(model: Model, scenario: ScenarioConfig, chat: ChatClientConfig) -> Result<Self, ServiceError> {
        scenario.validate()?;
        model.check_scenario(&scenario)?;
        Ok(Self {
            model,
            scenario,
            chat,
            writer: tokio::sync::Mutex::new(()),
            current: RwLock::new(None),
            cache: Mutex::new(HashMap::new()),
            conversation: tokio::sync::Mutex::new(None),
        })
    }

    /// Start with `scene` loaded instead of an empty session.
    pub fn with_scene(self, scene: GridScene) -> Result<Self, ServiceError> {
        let session = self.session_for(scene, Vec::new())?;
        *self.current.write().expect("session lock") = Some(Arc::new(session));
        Ok(self)
    }

    pub fn session(&self) -> Option<Arc<Session>> {
        self.current.read().expect("session lock").clone()
    }

    fn session_for(&self, scene: GridScene, history: Vec<HistoryEntry>) -> Result<Session, ServiceError> {
        let qmaps = self.model.qmaps(&scene)?;
        Ok(Session {
            digest: scene.digest(),
            scene,
            qmaps,
            history,
        })
    }

    fn replace(&self, session: Session) {
        self.cache.lock().expect("cache lock").clear();
        *self.current.write().expect("session lock") = Some(Arc::new(session));
    }

    fn explanation(&self, session: &Session, request: &ExplainRequest) -> Result<Arc<String>, ServiceError> {
        let key = (session.digest.clone(), canonical_json(request));
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let body = Arc::new(explain_with(&session.qmaps, &session.scene, request)?.to_json());
        self.cache.lock().expect("cache lock").insert(key, body.clone());
        Ok(body)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/scene", get(get_scene).post(post_scene))
        .route("/qmaps", get(get_qmaps))
        .route("/act", post(post_act))
        .route("/explain", post(post_explain))
        .route("/chat", post(post_chat))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Usage(format!("cannot bind {addr}: {e}")))?;
    eprintln!("rdqmap: serving on http://{}", listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ServiceError::Usage(format!("server stopped: {e}")))
}

/// An error response: status plus `{"error":{"kind","message"}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    fn no_scene() -> Self {
        Self::new(StatusCode::NOT_FOUND, "no_scene", "no scene loaded; POST /scene first")
    }

    fn finished() -> Self {
        Self::new(StatusCode::CONFLICT, "episode_finished", "episode already finished")
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Scene(SceneError::EpisodeFinished) => StatusCode::CONFLICT,
            ServiceError::Chat(_) => StatusCode::BAD_GATEWAY,
            ServiceError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.kind(), e.to_string())
    }
}

impl From<ExplainError> for ApiError {
    fn from(e: ExplainError) -> Self {
        ServiceError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"error": {"kind": self.kind, "message": self.message}});
        json_body(self.status, canonical_json(&body))
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_body(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn ok_json<T: Serialize>(value: &T) -> ApiResult {
    Ok(json_body(StatusCode::OK, canonical_json(value)))
}

/// Parse an optional JSON body; an empty body means the default request.
fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed", e.to_string()))
}

fn current(state: &AppState) -> Result<Arc<Session>, ApiError> {
    state.session().ok_or_else(ApiError::no_scene)
}

async fn health(State(state): State<Arc<AppState>>) -> ApiResult {
    let session = state.session();
    ok_json(&serde_json::json!({
        "status": "ok",
        "model": state.model.kind(),
        "scenario": state.scenario.scenario(),
        "scene_loaded": session.is_some(),
        "steps": session.map(|s| s.history.len()).unwrap_or(0),
    }))
}

#[derive(Serialize)]
struct SceneView<'a> {
    digest: &'a str,
    scene: SceneFile,
    history: &'a [HistoryEntry],
}

fn scene_view(session: &Session) -> ApiResult {
    ok_json(&SceneView {
        digest: &session.digest,
        scene: SceneFile::from_scene(&session.scene),
        history: &session.history,
    })
}

async fn get_scene(State(state): State<Arc<AppState>>) -> ApiResult {
    let session = current(&state)?;
    scene_view(&session)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SceneRequest {
    seed: Option<u64>,
    scenario: Option<Scenario>,
    /// A complete scene to load instead of generating one.
    scene: Option<SceneFile>,
}

async fn post_scene(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let request: SceneRequest = parse_body(&body)?;
    let _writer = state.writer.lock().await;
    let scene = match (request.seed, request.scene) {
        (Some(seed), None) => {
            let requested = request.scenario.unwrap_or(state.scenario.scenario());
            let config = if requested == state.scenario.scenario() {
                state.scenario.clone()
            } else if matches!(state.model, Model::Fixed(_)) {
                ScenarioConfig::default_for(requested)
            } else {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "scenario",
                    format!("the loaded model serves the {} scenario", state.scenario.scenario().name()),
                ));
            };
            config.generate(seed).map_err(ServiceError::from)?
        }
        (None, Some(file)) => file.into_scene().map_err(ServiceError::from)?,
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "malformed",
                "give exactly one of \"seed\" or \"scene\"",
            ))
        }
    };
    let session = state.session_for(scene, Vec::new())?;
    let response = scene_view(&session);
    state.replace(session);
    response
}

#[derive(Serialize)]
struct QMapsView<'a> {
    width: usize,
    height: usize,
    component_names: &'a [String],
    weights: &'a [f64],
    /// One row-major grid (`maps[k][v][u]`) per component.
    maps: Vec<Vec<Vec<f64>>>,
    composite: Vec<Vec<f64>>,
    greedy: Action,
    scene_digest: &'a str,
}

async fn get_qmaps(State(state): State<Arc<AppState>>) -> ApiResult {
    let session = current(&state)?;
    let q = &session.qmaps;
    let greedy = select_global(q, None, session.scene.scenario.primitive()).map_err(ServiceError::from)?;
    ok_json(&QMapsView {
        width: q.width(),
        height: q.height(),
        component_names: &q.component_names,
        weights: &q.weights,
        maps: q.maps.iter().map(|m| m.rows()).collect(),
        composite: composite(q).rows(),
        greedy,
        scene_digest: &session.digest,
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ActRequest {
    /// Pixel to act on; the greedy action when absent.
    pixel: Option<Pixel>,
}

#[derive(Serialize)]
struct ActResponse {
    action: Action,
    #[serde(flatten)]
    outcome: StepOutcome,
    scene_digest: String,
}

async fn post_act(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let request: ActRequest = parse_body(&body)?;
    let _writer = state.writer.lock().await;
    let session = current(&state)?;
    if session.scene.done {
        return Err(ApiError::finished());
    }
    let primitive = session.scene.scenario.primitive();
    let action = match request.pixel {
        Some(p) => Action { primitive, pixel: p },
        None => select_global(&session.qmaps, None, primitive).map_err(ServiceError::from)?,
    };
    let mut scene = session.scene.clone();
    let outcome = scene::step(&mut scene, &action).map_err(ServiceError::from)?;
    let mut history = session.history.clone();
    history.push(HistoryEntry {
        action,
        reward: outcome.reward.clone(),
        info: outcome.info.clone(),
    });
    let next = state.session_for(scene, history)?;
    let response = ActResponse {
        action,
        outcome,
        scene_digest: next.digest.clone(),
    };
    state.replace(next);
    ok_json(&response)
}

async fn post_explain(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let request: ExplainRequest = parse_body(&body)?;
    let session = current(&state)?;
    let body = state.explanation(&session, &request)?;
    Ok(json_body(StatusCode::OK, body.as_str().to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ChatRequestBody {
    question: String,
}

async fn post_chat(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let request: ChatRequestBody = parse_body(&body)?;
    if request.question.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "malformed", "question must not be empty"));
    }
    let session = current(&state)?;
    let bundle_json = state.explanation(&session, &ExplainRequest::default())?;
    let bundle: ExplanationBundle = serde_json::from_str(&bundle_json).expect("cached bundle parses");
    let mut guard = state.conversation.lock().await;
    if guard.as_ref().map(|c| c.digest != session.digest).unwrap_or(true) {
        *guard = Some(Conversation {
            digest: session.digest.clone(),
            prompt: build_prompt_with_palette(session.scene.scenario, &bundle, &session.scene.palette),
        });
    }
    let conversation = guard.as_mut().expect("conversation set above");
    let answer = remote::chat(&state.chat, state.chat.mode, &mut conversation.prompt, &bundle, &request.question)
        .await
        .map_err(|e: ChatError| ApiError::from(ServiceError::from(e)))?;
    ok_json(&serde_json::json!({
        "answer": answer,
        "mode": state.chat.mode,
        "turns": conversation.prompt.messages.len(),
    }))
}

