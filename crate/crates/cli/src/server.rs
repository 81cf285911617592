//! HTTP session service.
//!
//! Every session is owned by one coordinator thread that runs the optimizer.
//! Handlers never touch the session itself: they read the latest published
//! snapshot, or drop a verdict / stop request into the session's inbox, which
//! the coordinator drains. The inbox mutex is the single point where answers
//! are checked against the pending query, so duplicate answers are rejected
//! even when two arrive at once.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use prefmorl::golden::GoldenSpec;
use prefmorl::preference::{simulated_dm_compare, Outcome, Source};
use prefmorl::session::{
    save_checkpoint, DmMode, MetricsRecord, Phase, RunMode, Session, SessionConfig,
};

/// Carried by every response body.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: u64,
    pub objectives: Vec<f64>,
    pub weights: Vec<f64>,
    pub times_queried: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub task_id: u64,
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub query_id: u64,
    pub round: usize,
    pub a: Candidate,
    pub b: Candidate,
}

/// What handlers see of a session; refreshed by the coordinator after every
/// step.
#[derive(Debug, Clone, Serialize)]
struct Snapshot {
    phase: Phase,
    mode: RunMode,
    generation: u64,
    rounds_completed: usize,
    interactions_budget: usize,
    env_steps: u64,
    comparisons: usize,
    epsilon_star: Option<f64>,
    epsilon_bar: Option<f64>,
    error: Option<String>,
    #[serde(skip)]
    members: Vec<Member>,
    #[serde(skip)]
    query: Option<QueryView>,
    #[serde(skip)]
    metrics: Vec<MetricsRecord>,
}

impl Snapshot {
    fn of(session: &Session) -> Self {
        let st = session.state();
        let eps = st.epsilons();
        Self {
            phase: st.phase,
            mode: st.mode,
            generation: st.archive.generation,
            rounds_completed: st.rounds_completed,
            interactions_budget: st.config.interactions_budget,
            env_steps: st.archive.env_steps,
            comparisons: st.comparisons.len(),
            epsilon_star: eps.map(|e| e.0),
            epsilon_bar: eps.map(|e| e.1),
            error: None,
            members: st
                .archive
                .tasks
                .iter()
                .map(|t| Member {
                    id: t.id,
                    objectives: t.objective_estimate.values().to_vec(),
                    weights: t.weight.as_slice().to_vec(),
                    times_queried: t.times_queried,
                })
                .collect(),
            query: st.pending.as_ref().map(|q| QueryView {
                query_id: q.query_id,
                round: q.round,
                a: Candidate {
                    task_id: q.a_task,
                    objectives: q.a.values().to_vec(),
                },
                b: Candidate {
                    task_id: q.b_task,
                    objectives: q.b.values().to_vec(),
                },
            }),
            metrics: st.metrics.clone(),
        }
    }
}

#[derive(Debug, Default)]
struct Inbox {
    /// Query currently open for answers; `None` while computing or when the
    /// coordinator answers by itself.
    open: Option<u64>,
    /// Ids below this have been issued already.
    issued: u64,
    verdict: Option<(u64, Outcome)>,
    stop: bool,
}

struct Slot {
    snapshot: RwLock<Snapshot>,
    inbox: Mutex<Inbox>,
    wake: Condvar,
}

impl Slot {
    fn publish(&self, session: &Session, answers_itself: bool) {
        let snap = Snapshot::of(session);
        *self.snapshot.write().expect("snapshot lock") = snap;
        let mut inbox = self.inbox.lock().expect("inbox lock");
        inbox.issued = session.state().next_query_id;
        inbox.open = if answers_itself {
            None
        } else {
            session.pending_query().map(|q| q.query_id)
        };
    }

    fn fail(&self, message: String) {
        log::error!("session failed: {message}");
        self.snapshot.write().expect("snapshot lock").error = Some(message);
    }

    /// Blocks until the open query is answered, the timeout passes or a stop
    /// is requested (`None`).
    fn wait_for_verdict(&self, query_id: u64, timeout: Option<Duration>) -> Option<(Outcome, Source)> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut inbox = self.inbox.lock().expect("inbox lock");
        loop {
            if inbox.stop {
                return None;
            }
            if let Some((id, outcome)) = inbox.verdict.take() {
                if id == query_id {
                    return Some((outcome, Source::Human));
                }
            }
            inbox = match deadline {
                None => self.wake.wait(inbox).expect("inbox lock"),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        inbox.open = None;
                        log::info!("query {query_id} timed out; recording indifference");
                        return Some((Outcome::Indifferent, Source::Timeout));
                    }
                    self.wake.wait_timeout(inbox, d - now).expect("inbox lock").0
                }
            };
        }
    }
}

/// Runs one session to the end on the current thread.
fn coordinate(slot: Arc<Slot>, mut session: Session, checkpoint: Option<PathBuf>) {
    let cfg = session.state().config.clone();
    let (oracle, timeout): (Option<GoldenSpec>, Option<Duration>) = match &cfg.dm_mode {
        DmMode::Simulated { golden } => (Some(golden.clone()), None),
        DmMode::Interactive {
            feedback_timeout_secs,
            ..
        } => (None, feedback_timeout_secs.map(Duration::from_secs_f64)),
    };
    loop {
        slot.publish(&session, oracle.is_some());
        if let Some(path) = &checkpoint {
            if let Err(e) = save_checkpoint(session.state(), path) {
                log::warn!("could not write {}: {e}", path.display());
            }
        }
        if slot.inbox.lock().expect("inbox lock").stop {
            session.stop();
            slot.publish(&session, true);
            break;
        }
        let step = match session.phase() {
            Phase::Finished => break,
            Phase::AwaitingFeedback => {
                let q = session.pending_query().cloned().expect("pending query");
                let answer = match &oracle {
                    Some(g) => Some((simulated_dm_compare(g, &q.a, &q.b), Source::Simulated)),
                    None => slot.wait_for_verdict(q.query_id, timeout),
                };
                match answer {
                    Some((outcome, source)) => session.submit_feedback(q.query_id, outcome, source),
                    None => continue,
                }
            }
            Phase::Seeding | Phase::Optimizing => session.advance().map(|_| ()),
        };
        if let Err(e) = step {
            slot.fail(e.to_string());
            break;
        }
    }
}

pub struct ServiceState {
    default_config: SessionConfig,
    out_dir: Option<PathBuf>,
    sessions: RwLock<BTreeMap<u64, Arc<Slot>>>,
    next_id: AtomicU64,
}

impl ServiceState {
    /// `default_config` is used when a create request carries no config.
    /// With `out_dir`, each session is checkpointed there after every step.
    pub fn new(default_config: SessionConfig, out_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            default_config,
            out_dir,
            sessions: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn slot(&self, id: u64) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"schema_version": SCHEMA_VERSION, "error": self.message})),
        )
            .into_response()
    }
}

fn reply(mut body: Value) -> Json<Value> {
    body["schema_version"] = json!(SCHEMA_VERSION);
    Json(body)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    config: Option<SessionConfig>,
    mode: Option<RunMode>,
}

#[derive(Debug, Deserialize)]
struct FeedbackRequest {
    query_id: u64,
    verdict: Outcome,
}

async fn create_session(State(svc): State<Arc<ServiceState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?
    };
    let config = req.config.unwrap_or_else(|| svc.default_config.clone());
    let mode = req.mode.unwrap_or(RunMode::Preference);
    let session =
        Session::new(config, mode).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;

    let id = svc.next_id.fetch_add(1, Ordering::Relaxed);
    let slot = Arc::new(Slot {
        snapshot: RwLock::new(Snapshot::of(&session)),
        inbox: Mutex::new(Inbox::default()),
        wake: Condvar::new(),
    });
    svc.sessions.write().expect("session table lock").insert(id, slot.clone());
    let checkpoint = svc.out_dir.as_ref().map(|d| d.join(format!("session-{id}.json")));
    thread::Builder::new()
        .name(format!("session-{id}"))
        .spawn(move || coordinate(slot, session, checkpoint))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    log::info!("created session {id}");
    Ok(reply(json!({ "id": id })))
}

async fn list_sessions(State(svc): State<Arc<ServiceState>>) -> Json<Value> {
    let ids: Vec<u64> = svc.sessions.read().expect("session table lock").keys().copied().collect();
    reply(json!({ "sessions": ids }))
}

async fn get_state(State(svc): State<Arc<ServiceState>>, Path(id): Path<u64>) -> Result<Json<Value>, ApiError> {
    let slot = svc.slot(id)?;
    let snap = slot.snapshot.read().expect("snapshot lock");
    let mut body = serde_json::to_value(&*snap).expect("snapshot serializes");
    body["id"] = json!(id);
    body["metrics"] = serde_json::to_value(&snap.metrics).expect("metrics serialize");
    Ok(reply(body))
}

async fn get_query(State(svc): State<Arc<ServiceState>>, Path(id): Path<u64>) -> Result<Json<Value>, ApiError> {
    let slot = svc.slot(id)?;
    let snap = slot.snapshot.read().expect("snapshot lock");
    let body = match &snap.query {
        Some(q) => serde_json::to_value(q).expect("query serializes"),
        None => json!({}),
    };
    Ok(reply(body))
}

async fn get_archive(State(svc): State<Arc<ServiceState>>, Path(id): Path<u64>) -> Result<Json<Value>, ApiError> {
    let slot = svc.slot(id)?;
    let snap = slot.snapshot.read().expect("snapshot lock");
    Ok(reply(json!({
        "generation": snap.generation,
        "members": snap.members,
    })))
}

async fn post_feedback(
    State(svc): State<Arc<ServiceState>>,
    Path(id): Path<u64>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let slot = svc.slot(id)?;
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    {
        let mut inbox = slot.inbox.lock().expect("inbox lock");
        if inbox.open == Some(req.query_id) {
            inbox.open = None;
            inbox.verdict = Some((req.query_id, req.verdict));
            slot.wake.notify_all();
        } else if req.query_id < inbox.issued {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("query {} is not open for answers", req.query_id),
            ));
        } else {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("no query with id {}", req.query_id),
            ));
        }
    }
    // Reflect the accepted answer at once; the coordinator's next publish
    // carries on from here.
    let mut snap = slot.snapshot.write().expect("snapshot lock");
    if snap.query.as_ref().map(|q| q.query_id) == Some(req.query_id) {
        snap.query = None;
        snap.phase = Phase::Optimizing;
    }
    Ok(reply(json!({ "accepted": true, "phase": snap.phase })))
}

async fn post_stop(State(svc): State<Arc<ServiceState>>, Path(id): Path<u64>) -> Result<Json<Value>, ApiError> {
    let slot = svc.slot(id)?;
    slot.inbox.lock().expect("inbox lock").stop = true;
    slot.wake.notify_all();
    Ok(reply(json!({ "stopping": true })))
}

pub fn router(svc: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/archive", get(get_archive))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/sessions/{id}/stop", post(post_stop))
        .with_state(svc)
}

/// Serves until the process is interrupted.
pub async fn serve(listener: tokio::net::TcpListener, svc: Arc<ServiceState>) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
