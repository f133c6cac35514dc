//! Session HTTP service.
//!
//! Each session has one writer lock and a published snapshot. Mutations run on
//! a private copy and are published in one step, so readers only ever see
//! complete states.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use semcost::session::SessionSnapshot;
use semcost::{
    load_scenario, Cell, FieldKind, FixtureBackend, FixtureRecord, HttpConfig, Plan, PlanError, SensorError, Session,
    SessionError,
};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::backend::{self, BackendChoice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            detail: serde_json::Value::Null,
        }
    }

    fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::Scenario(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_scenario", message),
            SessionError::Fusion(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_fusion", message),
            SessionError::Field(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_field", message),
            SessionError::Sensor(s) => sensor_error(s),
            SessionError::Plan(PlanError::NoPath(x)) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "no_path", message)
                .with_detail(serde_json::json!({ "expansions": x })),
            SessionError::Plan(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "plan_error", message),
            SessionError::NothingToUndo => Self::new(StatusCode::CONFLICT, "nothing_to_undo", message),
            SessionError::Version { .. } | SessionError::Corrupt(_) | SessionError::Io(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", message)
            }
        }
    }
}

fn sensor_error(e: SensorError) -> ApiError {
    let message = e.to_string();
    let raw = match &e {
        SensorError::Malformed { raw, .. } | SensorError::Incomplete { raw, .. } | SensorError::NonNumeric { raw, .. } => {
            Some(raw.clone())
        }
        _ => None,
    };
    let (status, code) = match e {
        SensorError::InvalidQuery(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_query"),
        SensorError::Config(_) => (StatusCode::SERVICE_UNAVAILABLE, "sensor_config"),
        SensorError::Timeout => (StatusCode::GATEWAY_TIMEOUT, "sensor_timeout"),
        SensorError::FixtureMiss(_) => (StatusCode::BAD_GATEWAY, "fixture_miss"),
        _ => (StatusCode::BAD_GATEWAY, "sensor_error"),
    };
    ApiError::new(status, code, message).with_detail(serde_json::json!({ "raw": raw }))
}

/// A rejected mutation, kept beside the session for the console's banner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorLogEntry {
    pub timestamp_ms: u64,
    pub operation: String,
    pub error: ApiError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotView {
    pub session_id: String,
    #[serde(flatten)]
    pub snapshot: SessionSnapshot,
    pub error_log: Vec<ErrorLogEntry>,
}

struct Slot {
    writer: tokio::sync::Mutex<()>,
    published: RwLock<Arc<Session>>,
    errors: Mutex<Vec<ErrorLogEntry>>,
}

impl Slot {
    fn current(&self) -> Arc<Session> {
        self.published.read().expect("snapshot lock").clone()
    }

    fn view(&self, id: &str) -> SnapshotView {
        SnapshotView {
            session_id: id.to_string(),
            snapshot: self.current().snapshot(),
            error_log: self.errors.lock().expect("error log lock").clone(),
        }
    }
}

#[derive(Clone, Default)]
pub struct ServerConfig {
    pub state_dir: Option<PathBuf>,
    pub fixtures: Vec<FixtureRecord>,
    pub http: HttpConfig,
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Slot>>>>,
    fixtures: Arc<Mutex<FixtureBackend>>,
    config: Arc<ServerConfig>,
}

impl AppState {
    /// Builds the state, restoring any sessions saved under the state directory.
    pub fn new(config: ServerConfig) -> std::io::Result<Self> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &config.state_dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                    continue;
                };
                match Session::load_state(&path) {
                    Ok(s) => {
                        sessions.insert(id, Arc::new(new_slot(s)));
                    }
                    Err(e) => eprintln!("skipping {}: {e}", path.display()),
                }
            }
        }
        Ok(AppState {
            sessions: Arc::new(RwLock::new(sessions)),
            fixtures: Arc::new(Mutex::new(FixtureBackend::new(config.fixtures.clone()))),
            config: Arc::new(config),
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn persist(&self, id: &str, session: &Session) -> Result<(), ApiError> {
        if let Some(dir) = &self.config.state_dir {
            session.save_state(dir.join(format!("{id}.json")))?;
        }
        Ok(())
    }

    /// Runs `op` on a copy of the session off the async runtime and publishes
    /// the result only if it succeeds.
    async fn mutate<R, F>(&self, id: &str, operation: &str, op: F) -> Result<R, ApiError>
    where
        R: Send + 'static,
        F: FnOnce(&mut Session, &AppState) -> Result<R, ApiError> + Send + 'static,
    {
        let slot = self.slot(id)?;
        let _guard = slot.writer.lock().await;
        let mut working = (*slot.current()).clone();
        let state = self.clone();
        let outcome = tokio::task::spawn_blocking(move || op(&mut working, &state).map(|r| (r, working)))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        match outcome {
            Ok((r, working)) => {
                self.persist(id, &working)?;
                *slot.published.write().expect("snapshot lock") = Arc::new(working);
                Ok(r)
            }
            Err(e) => {
                slot.errors.lock().expect("error log lock").push(ErrorLogEntry {
                    timestamp_ms: SystemTime::now()
                        .duration_since(UNIX_EPOCH)
                        .map(|d| d.as_millis() as u64)
                        .unwrap_or(0),
                    operation: operation.to_string(),
                    error: e.clone(),
                });
                Err(e)
            }
        }
    }
}

fn new_slot(session: Session) -> Slot {
    Slot {
        writer: tokio::sync::Mutex::new(()),
        published: RwLock::new(Arc::new(session)),
        errors: Mutex::new(Vec::new()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateBody {
    pub scenario: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptBody {
    pub text: String,
    #[serde(default = "default_backend")]
    pub backend: BackendChoice,
    pub trust_n: Option<f64>,
}

fn default_backend() -> BackendChoice {
    BackendChoice::Mock
}

#[derive(Debug, Deserialize)]
pub struct FieldQuery {
    pub kind: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FieldBody {
    pub kind: FieldKind,
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 first; `null` for unbounded cells.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PathBody {
    pub path: Vec<Cell>,
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateBody>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(body) = body.map_err(|e| bad_request(e.body_text()))?;
    let scenario = load_scenario(&body.scenario.to_string()).map_err(SessionError::from)?;
    let session = Session::new(scenario)?;
    let id = Uuid::new_v4().to_string();
    state.persist(&id, &session)?;
    state
        .sessions
        .write()
        .expect("session table lock")
        .insert(id.clone(), Arc::new(new_slot(session)));
    Ok((StatusCode::CREATED, Json(Created { session_id: id })))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SnapshotView>, ApiError> {
    Ok(Json(state.slot(&id)?.view(&id)))
}

async fn apply_prompt(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PromptBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<SnapshotView>, ApiError> {
    let Json(body) = body.map_err(|e| bad_request(e.body_text()))?;
    state
        .mutate(&id, "prompt", move |session, app| {
            let trust = body.trust_n;
            match body.backend {
                BackendChoice::Fixture => {
                    let mut fixtures = app.fixtures.lock().expect("fixture lock");
                    session.apply_prompt(&body.text, &mut *fixtures, trust)?;
                }
                choice => {
                    let mut b = backend::build(choice, &[], &app.config.http, None).map_err(SessionError::from)?;
                    session.apply_prompt(&body.text, &mut b, trust)?;
                }
            }
            Ok(())
        })
        .await?;
    Ok(Json(state.slot(&id)?.view(&id)))
}

async fn replan(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Plan>, ApiError> {
    let plan = state
        .mutate(&id, "plan", |session, _| Ok(session.replan()?))
        .await?;
    Ok(Json(plan))
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SnapshotView>, ApiError> {
    state.mutate(&id, "undo", |session, _| Ok(session.undo()?)).await?;
    Ok(Json(state.slot(&id)?.view(&id)))
}

async fn field(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FieldQuery>,
) -> Result<Json<FieldBody>, ApiError> {
    let kind: FieldKind = q.kind.as_deref().unwrap_or("combined").parse().map_err(bad_request)?;
    let dump = state.slot(&id)?.current().field_dump(kind);
    Ok(Json(FieldBody {
        kind,
        width: dump.width,
        height: dump.height,
        values: dump.values,
    }))
}

async fn path(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<PathBody>, ApiError> {
    let session = state.slot(&id)?.current();
    let plan = session.last_plan().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, "no_plan", "no plan yet; POST /sessions/{id}/plan first")
    })?;
    Ok(Json(PathBody {
        path: plan.path.clone(),
    }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/prompt", post(apply_prompt))
        .route("/sessions/{id}/plan", post(replan))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/field", get(field))
        .route("/sessions/{id}/path", get(path))
        .with_state(state)
}

pub async fn serve(port: u16, config: ServerConfig) -> std::io::Result<()> {
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
