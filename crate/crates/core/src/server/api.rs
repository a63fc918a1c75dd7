use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::sync::Mutex;

use super::eventlog::{DayEvent, EventKind, EventLog, TurnEvent};
use crate::action;
use crate::appraisal::{EmotionState, HumanInput};
use crate::engine::{Ablation, AgentConfig, Clock, EngineError, Session};
use crate::llm::{self, BackendConfig, BackendError, BackendKind, CompletionBackend};
use crate::memory::MemoryStore;
use crate::persona::PersonalityProfile;

pub type BackendFactory =
    Arc<dyn Fn(&BackendConfig) -> Result<Arc<dyn CompletionBackend>, BackendError> + Send + Sync>;

/// Command-line overrides applied to every config the server sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackendOverride {
    pub kind: Option<BackendKind>,
    pub seed: Option<u64>,
}

impl BackendOverride {
    pub fn apply(&self, config: &mut BackendConfig) {
        if let Some(kind) = self.kind {
            config.kind = kind;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
    }
}

#[derive(Clone)]
pub struct ServerOptions {
    /// Where event logs and snapshots go; `None` keeps sessions in memory.
    pub data_dir: Option<PathBuf>,
    pub overrides: BackendOverride,
    pub snapshot_every: u64,
    pub backend_factory: BackendFactory,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            data_dir: None,
            overrides: BackendOverride::default(),
            snapshot_every: 8,
            backend_factory: Arc::new(llm::build_backend),
        }
    }
}

impl ServerOptions {
    pub fn with_data_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.data_dir = Some(dir.into());
        self
    }

    fn sessions_dir(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("sessions"))
    }
}

/// Read-only view published after every committed turn, so reads never
/// wait on an in-flight turn.
#[derive(Debug, Clone)]
struct View {
    name: String,
    profile: PersonalityProfile,
    ablation: Ablation,
    emotion: EmotionState,
    clock: Clock,
    store: MemoryStore,
}

impl View {
    fn of(session: &Session) -> View {
        View {
            name: session.config().name.clone(),
            profile: session.config().profile.clone(),
            ablation: session.config().ablation,
            emotion: *session.emotion(),
            clock: session.clock(),
            store: session.store().clone(),
        }
    }
}

struct Live {
    session: Session,
    log: Option<EventLog>,
}

struct Slot {
    live: Arc<Mutex<Live>>,
    view: RwLock<View>,
}

struct Inner {
    sessions: RwLock<BTreeMap<String, Arc<Slot>>>,
    opts: ServerOptions,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(opts: ServerOptions) -> AppState {
        AppState(Arc::new(Inner {
            sessions: RwLock::new(BTreeMap::new()),
            opts,
        }))
    }

    /// Load every session found under the data directory.
    pub fn resume(opts: ServerOptions) -> Result<AppState, String> {
        let state = AppState::new(opts);
        let Some(root) = state.0.opts.sessions_dir() else {
            return Ok(state);
        };
        if !root.exists() {
            return Ok(state);
        }
        let entries = std::fs::read_dir(&root).map_err(|e| format!("{}: {e}", root.display()))?;
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            state
                .resume_one(&dir)
                .map_err(|e| format!("{}: {e}", dir.display()))?;
        }
        Ok(state)
    }

    fn resume_one(&self, dir: &Path) -> Result<(), String> {
        let opts = &self.0.opts;
        let (log, recovered) =
            EventLog::resume(dir, opts.snapshot_every).map_err(|e| e.to_string())?;
        let mut state = recovered.state;
        opts.overrides.apply(&mut state.config.backend);
        let space = action::shipped_space(&state.config.space_id)
            .ok_or_else(|| format!("unknown action space `{}`", state.config.space_id))?;
        let backend = (opts.backend_factory)(&state.config.backend).map_err(|e| e.to_string())?;
        let session = Session::from_state(state, space, backend);
        tracing::info!(id = session.id(), seq = log.last_seq(), "resumed session");
        self.insert(session, Some(log));
        Ok(())
    }

    fn insert(&self, session: Session, log: Option<EventLog>) -> String {
        let id = session.id().to_string();
        let slot = Arc::new(Slot {
            view: RwLock::new(View::of(&session)),
            live: Arc::new(Mutex::new(Live { session, log })),
        });
        self.0
            .sessions
            .write()
            .expect("session map")
            .insert(id.clone(), slot);
        id
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.0
            .sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_session",
                    format!("no session `{id}`"),
                )
            })
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.0
            .sessions
            .read()
            .expect("session map")
            .keys()
            .cloned()
            .collect()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}/turns", post(post_turn))
        .route("/v1/sessions/{id}/end-day", post(end_day))
        .route("/v1/sessions/{id}/memory", get(get_memory))
        .route("/v1/sessions/{id}/state", get(get_state))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: String) -> ApiError {
        ApiError {
            status,
            code,
            message,
            field: None,
        }
    }

    fn bad_request(code: &'static str, field: String, message: String) -> ApiError {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code,
            message,
            field: Some(field),
        }
    }

    fn internal(message: impl ToString) -> ApiError {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            message.to_string(),
        )
    }

    fn busy() -> ApiError {
        ApiError::new(
            StatusCode::CONFLICT,
            "turn_in_flight",
            "a request is already running for this session".into(),
        )
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> ApiError {
        let message = e.to_string();
        match e {
            _ if e.is_backend_failure() => {
                ApiError::new(StatusCode::BAD_GATEWAY, "backend_failure", message)
            }
            EngineError::UnknownSpace(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_space", message)
            }
            EngineError::Config(c) => ApiError::bad_request("invalid_config", c.path, c.message),
            EngineError::Input(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", message)
            }
            EngineError::DayInPast { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "day_in_past", message)
            }
            EngineError::DayNotClosed { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "day_not_closed", message)
            }
            _ => ApiError::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(field) = self.field {
            body["field"] = field.into();
        }
        (self.status, Json(body)).into_response()
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        ApiError::bad_request("invalid_body", e.path().to_string(), e.inner().to_string())
    })
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "schema_version": crate::SCHEMA_VERSION }))
}

async fn list_sessions(State(app): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "sessions": app.session_ids() }))
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body)
        .map_err(|e| ApiError::bad_request("invalid_config", ".".into(), e.to_string()))?;
    let mut config = AgentConfig::from_json(text)
        .map_err(|e| ApiError::bad_request("invalid_config", e.path, e.message))?;
    let opts = app.0.opts.clone();
    opts.overrides.apply(&mut config.backend);
    let space = action::shipped_space(&config.space_id)
        .ok_or(EngineError::UnknownSpace(config.space_id.clone()))?;
    let backend = (opts.backend_factory)(&config.backend)
        .map_err(|e| ApiError::bad_request("invalid_config", "backend".into(), e.to_string()))?;
    let session = Session::with_parts(config, space, backend)?;
    let app2 = app.clone();
    let id = blocking(move || {
        let log = match opts.sessions_dir() {
            Some(root) => Some(
                EventLog::create(
                    &root.join(session.id()),
                    session.state(),
                    opts.snapshot_every,
                )
                .map_err(ApiError::internal)?,
            ),
            None => None,
        };
        Ok(app2.insert(session, log))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response())
}

/// Run `op` on a copy of the session, log its event, then commit. Any
/// failure leaves the live session untouched.
async fn mutate<T: Serialize + Send + 'static>(
    app: &AppState,
    id: &str,
    op: impl FnOnce(&mut Session) -> Result<(T, EventKind, serde_json::Value), EngineError>
        + Send
        + 'static,
) -> Result<Json<T>, ApiError> {
    let slot = app.slot(id)?;
    let mut live = slot
        .live
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::busy())?;
    let slot2 = slot.clone();
    blocking(move || {
        let mut next = live.session.clone();
        let (out, kind, payload) = op(&mut next)?;
        if let Some(log) = live.log.as_mut() {
            log.append(kind, &payload).map_err(ApiError::internal)?;
            log.maybe_snapshot(next.state())
                .map_err(ApiError::internal)?;
        }
        *slot2.view.write().expect("view") = View::of(&next);
        live.session = next;
        Ok(Json(out))
    })
    .await
}

async fn post_turn(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<crate::engine::TurnResult>, ApiError> {
    app.slot(&id)?;
    let input: HumanInput = parse_body(&body)?;
    mutate(&app, &id, move |session| {
        let result = session.step(input)?;
        let episode = result
            .episode_id
            .as_deref()
            .and_then(|eid| session.store().episode(eid))
            .cloned();
        let event = TurnEvent {
            result: result.clone(),
            episode,
            clock: session.clock(),
            steps: session.state().steps,
        };
        let payload = serde_json::to_value(event).expect("turn event serializes");
        Ok((result, EventKind::Turn, payload))
    })
    .await
}

async fn end_day(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<crate::engine::DayReport>, ApiError> {
    mutate(&app, &id, |session| {
        let report = session.end_day()?;
        let kind = if session.config().ablation.memory_enabled {
            EventKind::Reflection
        } else {
            EventKind::DayAdvanced
        };
        let event = DayEvent {
            report: report.clone(),
            clock: session.clock(),
        };
        Ok((
            report,
            kind,
            serde_json::to_value(event).expect("day event serializes"),
        ))
    })
    .await
}

async fn get_memory(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let slot = app.slot(&id)?;
    let view = slot.view.read().expect("view");
    Ok(Json(json!({
        "episodic": view.store.episodic,
        "semantic": view.store.semantic,
    })))
}

async fn get_state(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let slot = app.slot(&id)?;
    let view = slot.view.read().expect("view");
    Ok(Json(json!({
        "session_id": id,
        "name": view.name,
        "emotion": view.emotion,
        "clock": view.clock,
        "profile": view.profile,
        "ablation": view.ablation,
    })))
}
