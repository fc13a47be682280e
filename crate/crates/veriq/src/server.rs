//! The examiner HTTP API. Each session is guarded by its own mutex and,
//! when a state directory is configured, rewritten to disk after every
//! mutation.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use veriq_core::engine::{Administration, Engine, Presentation};
use veriq_core::psychometrics::transcript::{self, Clock};
use veriq_core::psychometrics::{Age, Composition, ItemPool, NormTable, Report, Step, SubtestProgress};
use veriq_core::Error;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionMeta {
    pub id: String,
    pub pool: PathBuf,
    pub norms: PathBuf,
    pub age: Age,
    pub clock: Clock,
}

struct LiveSession {
    meta: SessionMeta,
    norms: NormTable,
    admin: Administration,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    engine: Arc<Engine>,
    state_dir: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<LiveSession>>>>,
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NotCurrent(_) => (StatusCode::CONFLICT, "not_current"),
            Error::InvalidScores(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_scores"),
            Error::AgeOutOfRange(_) => (StatusCode::UNPROCESSABLE_ENTITY, "age_out_of_range"),
            Error::Composition(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_composition"),
            Error::Pool(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_pool"),
            Error::Norms(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_norms"),
            Error::Argument(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => (StatusCode::UNPROCESSABLE_ENTITY, "file_not_found"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", rejection.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub pool: PathBuf,
    pub norms: PathBuf,
    pub age: String,
    #[serde(default)]
    pub options: SessionOptions,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOptions {
    #[serde(default)]
    pub clock: Clock,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitScores {
    pub item_id: String,
    pub scores: Vec<u8>,
}

#[derive(Debug, Deserialize)]
pub struct ReportParams {
    pub age: Option<String>,
    pub composition: Option<String>,
}

/// Everything the console needs to render a screen.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionView {
    pub id: String,
    pub age: Age,
    pub step: Step,
    /// The presentation awaiting scores; after a subtest completes this is
    /// already the next subtest's first item.
    pub current: Option<Presentation>,
    pub progress: Vec<SubtestProgress>,
}

#[derive(Debug, Serialize)]
struct Created {
    id: String,
    state: SessionView,
}

fn view(live: &LiveSession) -> SessionView {
    SessionView {
        id: live.meta.id.clone(),
        age: live.meta.age,
        step: live.admin.step(),
        current: live.admin.current().cloned(),
        progress: live.admin.session().progress().to_vec(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix("session-")?.parse().ok()
}

impl AppState {
    /// Creates the state directory if needed and resumes every session
    /// found in it.
    pub fn open(engine: Arc<Engine>, state_dir: Option<PathBuf>) -> veriq_core::Result<Self> {
        let mut sessions = BTreeMap::new();
        if let Some(dir) = &state_dir {
            fs::create_dir_all(dir)?;
            let mut metas: Vec<PathBuf> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            metas.sort();
            for path in metas {
                let meta: SessionMeta = serde_json::from_slice(&fs::read(&path)?)?;
                let transcript_path = dir.join(format!("{}.jsonl", meta.id));
                let records = if transcript_path.exists() {
                    transcript::load_transcript(&transcript_path)?
                } else {
                    Vec::new()
                };
                let pool = Arc::new(ItemPool::load(&meta.pool)?);
                let norms = NormTable::load(&meta.norms)?;
                let admin = Administration::replay(engine.clone(), pool, meta.clock, &records)?;
                log::info!("resumed {} at {} records", meta.id, admin.transcript().len());
                sessions.insert(meta.id.clone(), Arc::new(Mutex::new(LiveSession { meta, norms, admin })));
            }
        }
        Ok(Self {
            inner: Arc::new(Inner {
                engine,
                state_dir,
                sessions: RwLock::new(sessions),
            }),
        })
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.inner.sessions.read().expect("session map poisoned").keys().cloned().collect()
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<LiveSession>>> {
        self.inner
            .sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    fn persist_meta(&self, meta: &SessionMeta) -> veriq_core::Result<()> {
        if let Some(dir) = &self.inner.state_dir {
            let json = serde_json::to_vec_pretty(meta)?;
            write_atomic(&dir.join(format!("{}.json", meta.id)), &json)?;
        }
        Ok(())
    }

    fn persist_transcript(&self, live: &LiveSession) -> veriq_core::Result<()> {
        if let Some(dir) = &self.inner.state_dir {
            let mut buf = Vec::new();
            transcript::write_transcript(&mut buf, live.admin.transcript())?;
            write_atomic(&dir.join(format!("{}.jsonl", live.meta.id)), &buf)?;
        }
        Ok(())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/current", get(current))
        .route("/sessions/{id}/scores", post(submit_scores))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/transcript", get(transcript_jsonl))
        .with_state(state)
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    let model = state.inner.engine.model();
    Json(serde_json::json!({
        "status": "ok",
        "concepts": model.vocabulary().n_concepts(),
        "features": model.vocabulary().n_features(),
        "k": model.spectral().k(),
        "sessions": state.session_ids().len(),
    }))
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(req) = body?;
    let age: Age = req.age.parse()?;
    let pool = Arc::new(ItemPool::load(&req.pool)?);
    let norms = NormTable::load(&req.norms)?;
    let mut sessions = state.inner.sessions.write().expect("session map poisoned");
    let n = sessions.keys().filter_map(|id| session_number(id)).max().unwrap_or(0) + 1;
    let id = format!("session-{n:04}");
    let meta = SessionMeta {
        id: id.clone(),
        pool: req.pool,
        norms: req.norms,
        age,
        clock: req.options.clock,
    };
    let admin = Administration::new(state.inner.engine.clone(), pool, meta.clock);
    let live = LiveSession { meta, norms, admin };
    state.persist_meta(&live.meta)?;
    state.persist_transcript(&live)?;
    let created = Created {
        id: id.clone(),
        state: view(&live),
    };
    sessions.insert(id, Arc::new(Mutex::new(live)));
    Ok((StatusCode::CREATED, Json(created)))
}

async fn current(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionView>> {
    let session = state.session(&id)?;
    let live = session.lock().expect("session poisoned");
    Ok(Json(view(&live)))
}

async fn submit_scores(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SubmitScores>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let session = state.session(&id)?;
    let Json(req) = body?;
    let mut live = session.lock().expect("session poisoned");
    live.admin.record_scores(&req.item_id, &req.scores)?;
    state.persist_transcript(&live)?;
    Ok(Json(view(&live)))
}

async fn report(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<ReportParams>,
) -> ApiResult<Json<Report>> {
    let session = state.session(&id)?;
    let live = session.lock().expect("session poisoned");
    let age = match &params.age {
        Some(a) => a.parse()?,
        None => live.meta.age,
    };
    let compositions = match &params.composition {
        Some(c) => vec![c.parse::<Composition>()?],
        None => Composition::NAMED.to_vec(),
    };
    Ok(Json(live.admin.report(&live.norms, age, &compositions)?))
}

async fn transcript_jsonl(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let session = state.session(&id)?;
    let live = session.lock().expect("session poisoned");
    let mut buf = Vec::new();
    transcript::write_transcript(&mut buf, live.admin.transcript()).map_err(ApiError::from)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], buf))
}
