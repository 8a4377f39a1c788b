//! HTTP API for interactive sessions, frontiers and experiment reports.
//!
//! Every session is stepped under its own mutex, so steps of one session
//! are serialized while different sessions run in parallel. Status reads
//! never take that mutex: after each step a snapshot is published and
//! reads are served from it.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::{Context, Result};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};

use dse_core::agent::{
    AgentError, AgentState, Applied, GeneratedPoint, LlmClient, Mode, ModeHandle, SessionTranscript,
    Session, SlotReport, StructuredReply,
};
use dse_core::design_space::{CostRange, DesignSpace, Mission};
use dse_core::dsdb::{Dsdb, FrontierPoint, Record};
use dse_core::evaluator::EvaluatorBackend;

use crate::commands::frontier_points;
use crate::config::{build_backend, load_space, ServiceConfig};

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn not_found(id: &str) -> Self {
        ApiError(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }

    fn conflict(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::CONFLICT, msg.into())
    }

    fn unprocessable(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg.into())
    }

    fn internal(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, msg.into())
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let status = match e {
            AgentError::Terminal | AgentError::Automation => StatusCode::CONFLICT,
            AgentError::RetriesExhausted { .. } | AgentError::Llm(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Published state of one session.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub id: String,
    pub state: AgentState,
    pub mode: Mode,
    pub gen_count: usize,
    pub sims_run: usize,
    pub forced_exit: bool,
    pub terminal: bool,
    /// A step is in flight.
    pub busy: bool,
    /// Loaded from disk; read-only.
    pub archived: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_point: Option<Record>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
    pub transcript: SessionTranscript,
}

struct Entry {
    session: Mutex<Session>,
    view: RwLock<SessionView>,
    mode: ModeHandle,
    client: Arc<dyn LlmClient>,
    busy: AtomicBool,
    runner: AtomicBool,
}

impl Entry {
    fn snapshot(&self) -> SessionView {
        let mut v = self.view.read().unwrap().clone();
        v.mode = self.mode.get();
        v.busy = self.busy.load(Ordering::SeqCst);
        v
    }
}

pub struct AppState {
    cfg: ServiceConfig,
    space: DesignSpace,
    dsdb: Arc<Dsdb>,
    backend: Arc<dyn EvaluatorBackend>,
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
    archived: BTreeMap<String, SessionView>,
    next_id: AtomicU64,
}

fn view_of(id: &str, s: &Session, last_error: Option<String>) -> SessionView {
    SessionView {
        id: id.to_string(),
        state: s.current_state(),
        mode: s.mode(),
        gen_count: s.gen_count(),
        sims_run: s.sims_run(),
        forced_exit: s.forced_exit(),
        terminal: s.is_terminal(),
        busy: false,
        archived: false,
        final_point: s.final_point().map(Record::from),
        last_error,
        transcript: s.transcript(),
    }
}

fn archived_view(id: &str, t: SessionTranscript) -> SessionView {
    SessionView {
        id: id.to_string(),
        state: t.current_state,
        mode: Mode::Manual,
        gen_count: t.gen_count,
        sims_run: t.sims_run,
        forced_exit: t.forced_exit,
        terminal: t.final_set.is_some(),
        busy: false,
        archived: true,
        final_point: None,
        last_error: None,
        transcript: t,
    }
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Result<Self> {
        cfg.validate()?;
        let space = load_space(&cfg.space_path)?;
        let dsdb = Arc::new(
            Dsdb::open(&cfg.dsdb_path)
                .with_context(|| format!("opening DSDB {}", cfg.dsdb_path.display()))?,
        );
        let backend = build_backend(cfg.backend, &space, &dsdb, cfg.gem5.as_ref())?;
        let archived = load_archive(&cfg.sessions_dir())?;
        let next_id = archived
            .keys()
            .filter_map(|k| k.strip_prefix('s')?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        Ok(AppState {
            cfg,
            space,
            dsdb,
            backend,
            sessions: RwLock::new(HashMap::new()),
            archived,
            next_id: AtomicU64::new(next_id),
        })
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Entry>> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| {
                if self.archived.contains_key(id) {
                    ApiError::conflict(format!("session `{id}` is archived"))
                } else {
                    ApiError::not_found(id)
                }
            })
    }

    fn publish(&self, id: &str, entry: &Entry, s: &Session, last_error: Option<String>) {
        let view = view_of(id, s, last_error);
        let dir = self.cfg.sessions_dir();
        // Persistence is best effort; the in-memory view stays authoritative.
        if std::fs::create_dir_all(&dir).is_ok() {
            if let Ok(text) = serde_json::to_string_pretty(&view.transcript) {
                let _ = std::fs::write(dir.join(format!("{id}.json")), text);
            }
        }
        *entry.view.write().unwrap() = view;
    }
}

fn load_archive(dir: &Path) -> Result<BTreeMap<String, SessionView>> {
    let mut out = BTreeMap::new();
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(out);
    };
    for e in entries {
        let path = e?.path();
        if path.extension().is_none_or(|x| x != "json") {
            continue;
        }
        let id = path.file_stem().unwrap().to_string_lossy().to_string();
        let text = std::fs::read_to_string(&path)?;
        let t: SessionTranscript = serde_json::from_str(&text)
            .with_context(|| format!("reading transcript {}", path.display()))?;
        out.insert(id.clone(), archived_view(&id, t));
    }
    Ok(out)
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub cost_range: CostRange,
    pub concurrency: usize,
    #[serde(default = "default_true")]
    pub rr_enabled: bool,
    #[serde(default = "default_true")]
    pub bp_enabled: bool,
    #[serde(default)]
    pub goal_description: Option<String>,
    #[serde(default)]
    pub mode: Option<Mode>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(body): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let mut mission = Mission::new(body.cost_range, body.concurrency)
        .map_err(|e| ApiError::unprocessable(e.to_string()))?
        .with_strategies(body.rr_enabled, body.bp_enabled);
    if let Some(goal) = body.goal_description {
        mission.goal_description = goal;
    }
    let client = app
        .cfg
        .llm
        .client()
        .map_err(|e| ApiError::internal(format!("{e:#}")))?;
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::SeqCst) + 1);
    let session = Session::new(mission, app.space.clone()).with_retry_limit(app.cfg.retry_limit);
    let mode = session.mode_handle();
    let view = view_of(&id, &session, None);
    let entry = Arc::new(Entry {
        session: Mutex::new(session),
        view: RwLock::new(view),
        mode,
        client,
        busy: AtomicBool::new(false),
        runner: AtomicBool::new(false),
    });
    {
        let s = entry.session.lock().unwrap();
        app.publish(&id, &entry, &s, None);
    }
    app.sessions.write().unwrap().insert(id.clone(), entry.clone());
    if body.mode == Some(Mode::Automation) {
        entry.mode.set(Mode::Automation);
        start_runner(app.clone(), id.clone(), entry.clone());
    }
    Ok((StatusCode::CREATED, Json(entry.snapshot())))
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Json<JsonValue> {
    let live: Vec<JsonValue> = app
        .sessions
        .read()
        .unwrap()
        .iter()
        .map(|(id, e)| {
            let v = e.snapshot();
            json!({ "id": id, "state": v.state, "mode": v.mode, "terminal": v.terminal, "archived": false })
        })
        .collect();
    let archived = app
        .archived
        .values()
        .map(|v| json!({ "id": v.id, "state": v.state, "mode": v.mode, "terminal": v.terminal, "archived": true }));
    Json(JsonValue::Array(live.into_iter().chain(archived).collect()))
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionView>> {
    if let Some(v) = app.archived.get(&id) {
        return Ok(Json(v.clone()));
    }
    Ok(Json(app.entry(&id)?.snapshot()))
}

#[derive(Debug, Deserialize)]
pub struct PostMessage {
    pub content: String,
}

#[derive(Debug, Serialize)]
pub struct MessageResponse {
    pub reply: StructuredReply,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results_batch: Option<Vec<SlotReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_point: Option<Record>,
    pub session: SessionView,
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<PostMessage>,
) -> ApiResult<Json<MessageResponse>> {
    let entry = app.entry(&id)?;
    if entry.mode.get() == Mode::Automation {
        return Err(ApiError::conflict("session is in automation mode"));
    }
    if entry.view.read().unwrap().terminal {
        return Err(ApiError::conflict("session has exited"));
    }
    let task_app = app.clone();
    let task_entry = entry.clone();
    let result = tokio::task::spawn_blocking(move || {
        let (app, entry) = (task_app, task_entry);
        let mut s = entry.session.lock().unwrap();
        entry.busy.store(true, Ordering::SeqCst);
        let r = s.manual_step(&body.content, entry.client.as_ref(), app.backend.as_ref(), &app.dsdb);
        let err = match &r {
            Err(e @ (AgentError::Automation | AgentError::Terminal)) => {
                entry.busy.store(false, Ordering::SeqCst);
                return Err(ApiError::conflict(e.to_string()));
            }
            Err(e) => Some(e.to_string()),
            Ok(_) => None,
        };
        app.publish(&id, &entry, &s, err);
        entry.busy.store(false, Ordering::SeqCst);
        r.map_err(ApiError::from)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    let (reply, applied) = result?;
    let (results_batch, final_point) = match applied {
        Applied::Simulated(slots) => (Some(slots), None),
        Applied::Exited(p) => (None, Some(Record::from(&p))),
        Applied::Transcript => (None, None),
    };
    Ok(Json(MessageResponse {
        reply,
        results_batch,
        final_point,
        session: entry.snapshot(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct SetMode {
    pub mode: Mode,
}

async fn set_mode(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<SetMode>,
) -> ApiResult<Json<SessionView>> {
    let entry = app.entry(&id)?;
    entry.mode.set(body.mode);
    if body.mode == Mode::Automation && !entry.view.read().unwrap().terminal {
        start_runner(app.clone(), id, entry.clone());
    }
    Ok(Json(entry.snapshot()))
}

/// Starts the automation loop for `entry` unless one is already running.
fn start_runner(app: Arc<AppState>, id: String, entry: Arc<Entry>) {
    if entry
        .runner
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return;
    }
    tokio::task::spawn_blocking(move || loop {
        let stop = {
            let mut s = entry.session.lock().unwrap();
            entry.busy.store(true, Ordering::SeqCst);
            let r = s.automation_step(
                entry.client.as_ref(),
                app.backend.as_ref(),
                &app.dsdb,
                app.cfg.max_gens,
            );
            let (stop, err) = match r {
                Ok(None) => (false, None),
                Ok(Some(_)) => (true, None),
                Err(e) => {
                    entry.mode.set(Mode::Manual);
                    (true, Some(e.to_string()))
                }
            };
            app.publish(&id, &entry, &s, err);
            entry.busy.store(false, Ordering::SeqCst);
            stop
        };
        if stop {
            entry.runner.store(false, Ordering::SeqCst);
            // A switch back to automation may have raced with this exit.
            let resume = entry.mode.get() == Mode::Automation
                && !entry.view.read().unwrap().terminal
                && entry
                    .runner
                    .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
                    .is_ok();
            if !resume {
                return;
            }
        }
    });
}

#[derive(Debug, Deserialize)]
pub struct RangeQuery {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SessionPoint {
    pub session: String,
    #[serde(flatten)]
    pub point: GeneratedPoint,
}

#[derive(Debug, Serialize)]
pub struct FrontierResponse {
    pub frontier: Vec<FrontierPoint>,
    pub generated: Vec<SessionPoint>,
}

async fn get_frontier(
    State(app): State<Arc<AppState>>,
    Query(q): Query<RangeQuery>,
) -> ApiResult<Json<FrontierResponse>> {
    let range = match (q.lo, q.hi) {
        (None, None) => None,
        (lo, Some(hi)) => Some(
            CostRange::new(lo.unwrap_or(0.0), hi).map_err(|e| ApiError::unprocessable(e.to_string()))?,
        ),
        (Some(_), None) => return Err(ApiError::unprocessable("`lo` given without `hi`")),
    };
    let frontier = frontier_points(&app.dsdb, range);
    let mut generated = Vec::new();
    let live: Vec<SessionView> = app.sessions.read().unwrap().values().map(|e| e.snapshot()).collect();
    for v in app.archived.values().chain(live.iter()) {
        generated.extend(v.transcript.generated.iter().map(|p| SessionPoint {
            session: v.id.clone(),
            point: p.clone(),
        }));
    }
    generated.sort_by(|a, b| (&a.session, a.point.gen, a.point.slot).cmp(&(&b.session, b.point.gen, b.point.slot)));
    Ok(Json(FrontierResponse { frontier, generated }))
}

async fn get_report(State(app): State<Arc<AppState>>) -> ApiResult<Json<JsonValue>> {
    let dir = app
        .cfg
        .report_dir
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "no report directory configured".into()))?;
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name))
            .map_err(|e| ApiError(StatusCode::NOT_FOUND, format!("{name}: {e}")))
    };
    let table = read("report.txt")?;
    let rows: Vec<JsonValue> = read("rows.jsonl")?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| ApiError::internal(format!("rows.jsonl: {e}")))?;
    Ok(Json(json!({ "table": table, "rows": rows })))
}

async fn get_space(State(app): State<Arc<AppState>>) -> Json<JsonValue> {
    let params: Vec<JsonValue> = app
        .space
        .params()
        .iter()
        .map(|p| json!({ "name": p.name(), "values": p.values() }))
        .collect();
    Json(json!({
        "dsl": app.space.to_dsl(),
        "cardinality": app.space.cardinality().to_string(),
        "params": params,
        "max_concurrency": dse_core::design_space::MAX_CONCURRENCY,
    }))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/mode", put(set_mode))
        .route("/frontier", get(get_frontier))
        .route("/experiments/report", get(get_report))
        .route("/space", get(get_space))
        .with_state(app)
}

pub async fn serve_on(listener: tokio::net::TcpListener, app: Arc<AppState>) -> Result<()> {
    axum::serve(listener, router(app)).await?;
    Ok(())
}

pub async fn serve(cfg: ServiceConfig) -> Result<()> {
    let listen = cfg.listen.clone();
    let app = Arc::new(AppState::new(cfg)?);
    let listener = tokio::net::TcpListener::bind(&listen)
        .await
        .with_context(|| format!("binding {listen}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    serve_on(listener, app).await
}
