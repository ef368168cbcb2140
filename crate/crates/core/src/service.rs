//! HTTP JSON API over [`Analysis`] sessions.
//!
//! Mutations are serialized per session; reads and what-if queries share a
//! read lock. Work runs on blocking threads, and any request still running
//! after `async_after` answers `202` with a token for `GET /jobs/{token}`.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::RwLock;

use crate::error::{ApiError, Error, ErrorCode, Result};
use crate::options::Options;
use crate::orientation::{
    Direction, EdgeBelief, FilePriors, FileProvider, HttpProvider, HttpProviderConfig, OrientationProvider,
};
use crate::pipeline::{default_max_size, default_n_runs, Analysis, Engine, StepOutcome, ZSpec};
use crate::session::SessionState;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub session_root: PathBuf,
    pub async_after: Duration,
    pub max_body_bytes: usize,
}

impl ServiceConfig {
    /// `MUAS_LISTEN` (default `127.0.0.1:8080`), `SESSION_ROOT` (default
    /// `./sessions`), `MUAS_ASYNC_AFTER_MS` (default 2000) and
    /// `MUAS_MAX_BODY_BYTES` (default 64 MiB).
    pub fn from_env() -> Result<Self> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let listen = var("MUAS_LISTEN")
            .unwrap_or_else(|| "127.0.0.1:8080".into())
            .parse()
            .map_err(|e| Error::InvalidInput(format!("MUAS_LISTEN: {e}")))?;
        let ms = match var("MUAS_ASYNC_AFTER_MS") {
            Some(v) => v
                .parse()
                .map_err(|e| Error::InvalidInput(format!("MUAS_ASYNC_AFTER_MS: {e}")))?,
            None => 2000,
        };
        let max_body_bytes = match var("MUAS_MAX_BODY_BYTES") {
            Some(v) => v
                .parse()
                .map_err(|e| Error::InvalidInput(format!("MUAS_MAX_BODY_BYTES: {e}")))?,
            None => 64 << 20,
        };
        Ok(ServiceConfig {
            listen,
            session_root: var("SESSION_ROOT").unwrap_or_else(|| "sessions".into()).into(),
            async_after: Duration::from_millis(ms),
            max_body_bytes,
        })
    }
}

enum Job {
    Running,
    Done(StatusCode, Value),
}

pub struct AppState {
    config: ServiceConfig,
    engine: Arc<Engine>,
    sessions: Mutex<HashMap<String, Arc<RwLock<Analysis>>>>,
    jobs: Mutex<HashMap<String, Job>>,
}

type Shared = Arc<AppState>;

impl AppState {
    pub fn new(config: ServiceConfig, engine: Arc<Engine>) -> Shared {
        Arc::new(AppState {
            config,
            engine,
            sessions: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<RwLock<Analysis>>> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        let st = SessionState::open(&self.config.session_root, id)?;
        let a = Arc::new(RwLock::new(Analysis::new(st, self.engine.clone())));
        map.insert(id.to_string(), a.clone());
        Ok(a)
    }

    fn create_session(&self, id: Option<String>) -> Result<String> {
        let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        let st = SessionState::create(&self.config.session_root, &id)?;
        let a = Arc::new(RwLock::new(Analysis::new(st, self.engine.clone())));
        self.sessions.lock().expect("session map poisoned").insert(id.clone(), a);
        Ok(id)
    }
}

struct Reply(StatusCode, Value);

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn error_reply(e: &Error) -> Reply {
    api_reply(ApiError::from(e))
}

fn api_reply(e: ApiError) -> Reply {
    let status = StatusCode::from_u16(e.code.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    Reply(status, serde_json::to_value(&e).unwrap_or_else(|_| json!({"code": "Internal"})))
}

fn done(r: Result<Value>) -> (StatusCode, Value) {
    match r {
        Ok(v) => (StatusCode::OK, v),
        Err(e) => {
            let Reply(s, v) = error_reply(&e);
            (s, v)
        }
    }
}

/// Waits `async_after` for `fut`; past that, parks it as a job and answers 202.
async fn run_or_park<F>(st: &Shared, fut: F) -> Reply
where
    F: Future<Output = (StatusCode, Value)> + Send + 'static,
{
    let mut handle = tokio::spawn(fut);
    match tokio::time::timeout(st.config.async_after, &mut handle).await {
        Ok(Ok((s, v))) => Reply(s, v),
        Ok(Err(join)) => error_reply(&Error::Internal(format!("worker failed: {join}"))),
        Err(_) => {
            let token = uuid::Uuid::new_v4().to_string();
            st.jobs.lock().expect("job map poisoned").insert(token.clone(), Job::Running);
            let st2 = st.clone();
            let t2 = token.clone();
            tokio::spawn(async move {
                let (s, v) = match handle.await {
                    Ok(r) => r,
                    Err(join) => {
                        let Reply(s, v) = error_reply(&Error::Internal(format!("worker failed: {join}")));
                        (s, v)
                    }
                };
                st2.jobs.lock().expect("job map poisoned").insert(t2, Job::Done(s, v));
            });
            Reply(
                StatusCode::ACCEPTED,
                json!({"status": "running", "job": token, "poll": format!("/jobs/{token}")}),
            )
        }
    }
}

/// Runs `f` with exclusive access to the session.
async fn mutate<F>(st: &Shared, id: &str, f: F) -> Reply
where
    F: FnOnce(&mut Analysis) -> Result<Value> + Send + 'static,
{
    let sess = match st.session(id) {
        Ok(s) => s,
        Err(e) => return error_reply(&e),
    };
    run_or_park(st, async move {
        let mut guard = sess.write_owned().await;
        let r = tokio::task::spawn_blocking(move || f(&mut guard)).await;
        done(r.unwrap_or_else(|e| Err(Error::Internal(format!("worker failed: {e}")))))
    })
    .await
}

/// Runs `f` with shared access to the session.
async fn read<F>(st: &Shared, id: &str, f: F) -> Reply
where
    F: FnOnce(&Analysis) -> Result<Value> + Send + 'static,
{
    let sess = match st.session(id) {
        Ok(s) => s,
        Err(e) => return error_reply(&e),
    };
    run_or_park(st, async move {
        let guard = sess.read_owned().await;
        let r = tokio::task::spawn_blocking(move || f(&guard)).await;
        done(r.unwrap_or_else(|e| Err(Error::Internal(format!("worker failed: {e}")))))
    })
    .await
}

fn body_json<T: for<'de> Deserialize<'de>>(body: std::result::Result<Bytes, BytesRejection>) -> Result<T> {
    let bytes = body.map_err(rejection)?;
    let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
    serde_json::from_slice(text).map_err(|e| Error::InvalidInput(format!("request body: {e}")))
}

fn rejection(r: BytesRejection) -> Error {
    if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
        Error::PayloadTooLarge
    } else {
        Error::InvalidInput(r.body_text())
    }
}

fn step_body(a: &Analysis, out: StepOutcome) -> Value {
    json!({
        "session_id": a.session.id(),
        "head": a.session.head(),
        "step": out.step,
        "outputs": out.outputs,
    })
}

pub fn router(state: Shared) -> Router {
    let limit = state.config.max_body_bytes;
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/data", post(upload_data))
        .route("/sessions/{id}/discover", post(discover))
        .route("/sessions/{id}/orient", post(orient))
        .route("/sessions/{id}/edges", patch(patch_edge))
        .route("/sessions/{id}/adjustment-sets", get(adjustment_sets))
        .route("/sessions/{id}/adjustment-sets/select", post(select_set))
        .route("/sessions/{id}/whatif/flip", post(whatif_flip))
        .route("/sessions/{id}/estimate", post(estimate))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/assumptions", get(assumptions))
        .route("/sessions/{id}/replay", get(replay))
        .route("/sessions/{id}/trackback", post(trackback))
        .route("/sessions/{id}/close", post(close))
        .route("/jobs/{token}", get(job))
        .route("/spec", get(spec))
        .fallback(|| async { api_reply(ApiError::new(ErrorCode::NotFound, "no such route")) })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Binds `config.listen` and serves until the process ends.
pub async fn serve(config: ServiceConfig, engine: Arc<Engine>) -> Result<()> {
    std::fs::create_dir_all(&config.session_root)?;
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config, engine)))
        .await
        .map_err(Error::Io)
}

#[derive(Deserialize, Default)]
struct CreateBody {
    session_id: Option<String>,
}

async fn create_session(State(st): State<Shared>, body: std::result::Result<Bytes, BytesRejection>) -> Reply {
    let r = body_json::<CreateBody>(body).and_then(|b| st.create_session(b.session_id));
    match r {
        Ok(id) => Reply(StatusCode::CREATED, json!({"session_id": id})),
        Err(e) => error_reply(&e),
    }
}

async fn get_session(State(st): State<Shared>, Path(id): Path<String>) -> Reply {
    read(&st, &id, |a| a.active_summary().map(|mut v| {
        v["session_id"] = json!(a.session.id());
        v["closed"] = json!(a.session.is_closed());
        v["steps"] = json!(a.session.steps());
        v
    }))
    .await
}

#[derive(Deserialize)]
struct DataBody {
    csv: String,
    treatment: String,
    outcome: String,
    #[serde(default)]
    source: Option<String>,
}

/// JSON `{csv, treatment, outcome}`, or a raw CSV body with
/// `?treatment=&outcome=`.
async fn upload_data(
    State(st): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
    body: std::result::Result<Bytes, BytesRejection>,
) -> Reply {
    let is_json = headers
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let parsed: Result<DataBody> = if is_json {
        body_json(body)
    } else {
        body.map_err(rejection).and_then(|b| {
            let csv = String::from_utf8(b.to_vec()).map_err(|_| Error::Parse("CSV body is not UTF-8".into()))?;
            let role = |k: &str| {
                q.get(k)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("query parameter `{k}` is required")))
            };
            Ok(DataBody {
                csv,
                treatment: role("treatment")?,
                outcome: role("outcome")?,
                source: q.get("source").cloned(),
            })
        })
    };
    let b = match parsed {
        Ok(b) => b,
        Err(e) => return error_reply(&e),
    };
    mutate(&st, &id, move |a| {
        let out = a.ingest_csv(&b.csv, &b.treatment, &b.outcome, b.source)?;
        Ok(step_body(a, out))
    })
    .await
}

#[derive(Deserialize)]
struct DiscoverBody {
    #[serde(default = "default_method")]
    method: String,
    #[serde(default)]
    options: Options,
}

fn default_method() -> String {
    "pc".into()
}

async fn discover(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> Reply {
    let b: DiscoverBody = match body_json(body) {
        Ok(b) => b,
        Err(e) => return error_reply(&e),
    };
    mutate(&st, &id, move |a| {
        let out = a.discover(&b.method, b.options)?;
        Ok(step_body(a, out))
    })
    .await
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ProviderSpec {
    File { priors: FilePriors },
    Http { endpoint: String },
}

#[derive(Deserialize)]
struct OrientBody {
    #[serde(default)]
    beliefs: Option<Vec<EdgeBelief>>,
    #[serde(default)]
    provider: Option<ProviderSpec>,
    #[serde(default)]
    variable_descriptions: BTreeMap<String, String>,
    #[serde(default)]
    context: String,
}

async fn orient(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> Reply {
    let b: OrientBody = match body_json(body) {
        Ok(b) => b,
        Err(e) => return error_reply(&e),
    };
    mutate(&st, &id, move |a| {
        let out = match (b.beliefs, b.provider) {
            (Some(beliefs), None) => a.orient_with_beliefs(beliefs, None)?,
            (None, Some(ProviderSpec::File { priors })) => {
                a.orient_with_provider(&FileProvider::new(priors), "file", &b.variable_descriptions, &b.context)?
            }
            (None, Some(ProviderSpec::Http { endpoint })) => {
                let p = HttpProvider::new(HttpProviderConfig::from_env(endpoint.clone()))?;
                let label = format!("http:{endpoint}");
                a.orient_with_provider(&p as &dyn OrientationProvider, &label, &b.variable_descriptions, &b.context)?
            }
            _ => {
                return Err(Error::InvalidInput(
                    "give exactly one of `beliefs` or `provider`".into(),
                ))
            }
        };
        Ok(step_body(a, out))
    })
    .await
}

#[derive(Deserialize)]
struct EdgeBody {
    from: String,
    to: String,
    /// `a_to_b` keeps `from -> to`; `b_to_a` sets `to -> from`.
    #[serde(default)]
    direction: Option<Direction>,
    #[serde(default = "one")]
    confidence: f64,
}

fn one() -> f64 {
    1.0
}

async fn patch_edge(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> Reply {
    let b: EdgeBody = match body_json(body) {
        Ok(b) => b,
        Err(e) => return error_reply(&e),
    };
    mutate(&st, &id, move |a| {
        let (from, to) = match b.direction.unwrap_or(Direction::AToB) {
            Direction::AToB => (b.from, b.to),
            Direction::BToA => (b.to, b.from),
            Direction::Unknown => return Err(Error::InvalidInput("direction must be a_to_b or b_to_a".into())),
        };
        let out = a.override_edge(&from, &to, b.confidence)?;
        Ok(step_body(a, out))
    })
    .await
}

fn max_size_param(q: &HashMap<String, String>) -> Result<usize> {
    match q.get("max_size") {
        Some(v) => v
            .parse()
            .map_err(|_| Error::InvalidInput(format!("max_size `{v}` is not a non-negative integer"))),
        None => Ok(default_max_size()),
    }
}

/// Records an adjust step and returns its result.
async fn adjustment_sets(
    State(st): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Reply {
    let k = match max_size_param(&q) {
        Ok(k) => k,
        Err(e) => return error_reply(&e),
    };
    mutate(&st, &id, move |a| {
        let out = a.adjust(k)?;
        Ok(step_body(a, out))
    })
    .await
}

#[derive(Deserialize)]
struct SelectBody {
    #[serde(alias = "Z")]
    z: ZSpec,
}

async fn select_set(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> Reply {
    let b: SelectBody = match body_json(body) {
        Ok(b) => b,
        Err(e) => return error_reply(&e),
    };
    mutate(&st, &id, move |a| {
        let out = a.select_adjustment(b.z)?;
        Ok(step_body(a, out))
    })
    .await
}

#[derive(Deserialize)]
struct FlipBody {
    edge: String,
    #[serde(default = "default_max_size")]
    max_size: usize,
}

async fn whatif_flip(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> Reply {
    let b: FlipBody = match body_json(body) {
        Ok(b) => b,
        Err(e) => return error_reply(&e),
    };
    read(&st, &id, move |a| Ok(serde_json::to_value(a.whatif_flip(&b.edge, b.max_size)?)?)).await
}

#[derive(Deserialize)]
struct EstimateBody {
    #[serde(default = "default_estimator")]
    estimator: String,
    #[serde(alias = "Z", default = "default_z")]
    z: ZSpec,
    #[serde(default = "default_n_runs")]
    n_runs: usize,
    #[serde(default)]
    options: Options,
    #[serde(default)]
    tau_true: Option<Vec<f64>>,
}

fn default_estimator() -> String {
    "s_learner".into()
}

fn default_z() -> ZSpec {
    ZSpec::parse("muas")
}

async fn estimate(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> Reply {
    let b: EstimateBody = match body_json(body) {
        Ok(b) => b,
        Err(e) => return error_reply(&e),
    };
    mutate(&st, &id, move |a| {
        let out = a.estimate(&b.estimator, b.z, b.n_runs, b.options, b.tau_true)?;
        Ok(step_body(a, out))
    })
    .await
}

async fn report(
    State(st): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Reply {
    let include = q.get("include_data").is_some_and(|v| v == "true" || v == "1");
    read(&st, &id, move |a| a.export_report(include)).await
}

async fn assumptions(State(st): State<Shared>, Path(id): Path<String>) -> Reply {
    read(&st, &id, |a| Ok(json!({"assumptions": a.session.list_assumptions()}))).await
}

async fn replay(State(st): State<Shared>, Path(id): Path<String>) -> Reply {
    read(&st, &id, |a| Ok(serde_json::to_value(a.replay()?)?)).await
}

#[derive(Deserialize)]
struct TrackbackBody {
    step_id: u64,
}

async fn trackback(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: std::result::Result<Bytes, BytesRejection>,
) -> Reply {
    let b: TrackbackBody = match body_json(body) {
        Ok(b) => b,
        Err(e) => return error_reply(&e),
    };
    mutate(&st, &id, move |a| {
        let head = a.trackback(b.step_id)?;
        Ok(json!({"session_id": a.session.id(), "head": head, "assumptions": a.session.list_assumptions()}))
    })
    .await
}

async fn close(State(st): State<Shared>, Path(id): Path<String>) -> Reply {
    mutate(&st, &id, |a| {
        a.session.close()?;
        Ok(json!({"session_id": a.session.id(), "closed": true}))
    })
    .await
}

async fn job(State(st): State<Shared>, Path(token): Path<String>) -> Reply {
    let jobs = st.jobs.lock().expect("job map poisoned");
    match jobs.get(&token) {
        Some(Job::Running) => Reply(StatusCode::ACCEPTED, json!({"status": "running", "job": token})),
        Some(Job::Done(s, v)) => Reply(*s, v.clone()),
        None => api_reply(ApiError::new(ErrorCode::NotFound, format!("unknown job `{token}`"))),
    }
}

async fn spec() -> Reply {
    Reply(StatusCode::OK, openapi())
}

/// OpenAPI description of the routes above.
pub fn openapi() -> Value {
    let op = |summary: &str| json!({"summary": summary, "responses": {"200": {"description": "ok"}, "202": {"description": "still running; poll the returned job"}, "default": {"description": "error", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/ApiError"}}}}}});
    let codes: Vec<&str> = ErrorCode::ALL.iter().map(|c| c.as_str()).collect();
    json!({
        "openapi": "3.0.3",
        "info": {"title": "muas causal analysis API", "version": env!("CARGO_PKG_VERSION")},
        "paths": {
            "/sessions": {"post": op("Create a session; body {session_id?}")},
            "/sessions/{id}": {"get": op("Active state and step list")},
            "/sessions/{id}/data": {"post": op("Upload CSV: JSON {csv, treatment, outcome} or text/csv with ?treatment=&outcome=")},
            "/sessions/{id}/discover": {"post": op("Run a discovery plugin: {method, options}")},
            "/sessions/{id}/orient": {"post": op("Orient edges: {beliefs} or {provider: {kind: file, priors} | {kind: http, endpoint}}")},
            "/sessions/{id}/edges": {"patch": op("Override one edge: {from, to, direction?, confidence?}")},
            "/sessions/{id}/adjustment-sets": {"get": op("Minimal-uncertainty adjustment set; ?max_size=k. Records an adjust step")},
            "/sessions/{id}/adjustment-sets/select": {"post": op("Choose the adjustment set: {z: \"all\" | [names]}")},
            "/sessions/{id}/whatif/flip": {"post": op("Recompute adjustment sets with one edge reversed: {edge, max_size?}; no state change")},
            "/sessions/{id}/estimate": {"post": op("Estimate the ATE: {estimator, z: \"muas\" | \"all\" | \"selected\" | [names], n_runs, options, tau_true?}")},
            "/sessions/{id}/report": {"get": op("Report document; ?include_data=true embeds data blobs")},
            "/sessions/{id}/assumptions": {"get": op("Active assumptions")},
            "/sessions/{id}/replay": {"get": op("Re-execute the log and compare output hashes")},
            "/sessions/{id}/trackback": {"post": op("Move the head: {step_id}")},
            "/sessions/{id}/close": {"post": op("Close the session")},
            "/jobs/{token}": {"get": op("Status or result of a long request")},
            "/spec": {"get": op("This document")}
        },
        "components": {"schemas": {"ApiError": {
            "type": "object",
            "required": ["code", "message"],
            "properties": {
                "code": {"type": "string", "enum": codes},
                "message": {"type": "string"},
                "step_context": {"type": "integer"}
            }
        }}}
    })
}
