//! HTTP routes. Request and response bodies are JSON; the message endpoint
//! answers with a server-sent event stream of turn events.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use cellx_core::agent::{AuditRecord, Decision, PolicyOverrides, TurnEvent};
use cellx_core::station::{FaultKind, KpiSample, StationSnapshot, KPI_RING_CAPACITY};
use futures::{Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ApiError;
use crate::service::{ApprovalAck, Service, SessionRecord, TurnView};

type AppState = State<Arc<Service>>;
type Params = Query<HashMap<String, String>>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/turns/{tid}", get(get_turn))
        .route("/sessions/{id}/turns/{tid}/approval", post(post_approval))
        .route("/station", get(get_station))
        .route("/station/kpis", get(get_kpis))
        .route("/station/fault", post(inject_fault))
        .route("/station/tick", post(tick_station))
        .route("/kb/search", get(search_kb))
        .route("/audit", get(get_audit))
        .with_state(service)
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("request body: {e}")))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    policy: Value,
}

async fn create_session(State(svc): AppState, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let overrides: PolicyOverrides = match req.policy {
        Value::Null => PolicyOverrides::default(),
        v => serde_json::from_value(v).map_err(|e| ApiError::InvalidPolicyOverride(e.to_string()))?,
    };
    let record = svc.create_session(&overrides)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_session(State(svc): AppState, Path(id): Path<String>) -> Result<Json<SessionRecord>, ApiError> {
    svc.session(&id).map(Json)
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostMessage {
    text: String,
}

/// SSE event name: the event's tag, e.g. `tool_call`.
fn sse_event(seq: usize, event: &TurnEvent) -> Event {
    let data = serde_json::to_value(event).expect("turn events serialize");
    let name = data["event"].as_str().unwrap_or("message").to_string();
    Event::default().id(seq.to_string()).event(name).data(data.to_string())
}

async fn post_message(
    State(svc): AppState,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let req: PostMessage = parse_body(&body)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::BadRequest("text must not be empty".into()));
    }
    let rx = svc.post_message(&id, &req.text)?;
    let stream = rx.enumerate().map(|(i, e)| Ok(sse_event(i, &e)));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn get_turn(State(svc): AppState, Path((id, tid)): Path<(String, String)>) -> Result<Json<TurnView>, ApiError> {
    svc.turn(&id, &tid).map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PostApproval {
    decision: Decision,
}

impl Default for PostApproval {
    fn default() -> Self {
        Self {
            decision: Decision::Rejected,
        }
    }
}

async fn post_approval(
    State(svc): AppState,
    Path((id, tid)): Path<(String, String)>,
    body: Bytes,
) -> Result<(StatusCode, Json<ApprovalAck>), ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::BadRequest("decision is required".into()));
    }
    let req: PostApproval = parse_body(&body)?;
    let ack = svc.resolve_approval(&id, &tid, req.decision)?;
    Ok((StatusCode::ACCEPTED, Json(ack)))
}

async fn get_station(State(svc): AppState) -> Json<StationSnapshot> {
    Json(svc.rig().station.lock().unwrap_or_else(|e| e.into_inner()).snapshot())
}

#[derive(Serialize)]
struct KpiWindow {
    window_s: f64,
    samples: Vec<KpiSample>,
}

pub const DEFAULT_KPI_WINDOW_S: f64 = 300.0;

async fn get_kpis(State(svc): AppState, Query(q): Params) -> Result<Json<KpiWindow>, ApiError> {
    let window_s = match q.get("window_s") {
        None => DEFAULT_KPI_WINDOW_S,
        Some(raw) => raw
            .parse::<f64>()
            .map_err(|_| ApiError::WindowOutOfRange(format!("window_s {raw:?} is not a number")))?,
    };
    let max = KPI_RING_CAPACITY as f64;
    if !(window_s > 0.0 && window_s <= max) {
        return Err(ApiError::WindowOutOfRange(format!("window_s must be in (0, {max}]")));
    }
    let samples = svc.rig().station.lock().unwrap_or_else(|e| e.into_inner()).history().window(window_s);
    Ok(Json(KpiWindow { window_s, samples }))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InjectFault {
    kind: Option<FaultKind>,
}

async fn inject_fault(State(svc): AppState, body: Bytes) -> Result<Json<StationSnapshot>, ApiError> {
    let req: InjectFault = parse_body(&body)?;
    let kind = req.kind.ok_or_else(|| ApiError::BadRequest("kind is required".into()))?;
    let mut st = svc.rig().station.lock().unwrap_or_else(|e| e.into_inner());
    st.inject_fault(kind).map_err(|e| ApiError::WrongState(e.to_string()))?;
    Ok(Json(st.snapshot()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Tick {
    #[serde(default = "one")]
    ticks: u32,
    #[serde(default = "one_second")]
    dt_s: f64,
}

fn one() -> u32 {
    1
}

fn one_second() -> f64 {
    1.0
}

impl Default for Tick {
    fn default() -> Self {
        Self { ticks: 1, dt_s: 1.0 }
    }
}

async fn tick_station(State(svc): AppState, body: Bytes) -> Result<Json<Vec<KpiSample>>, ApiError> {
    let req: Tick = parse_body(&body)?;
    if !(1..=KPI_RING_CAPACITY as u32).contains(&req.ticks) {
        return Err(ApiError::BadRequest(format!("ticks must be in 1..={KPI_RING_CAPACITY}")));
    }
    let mut st = svc.rig().station.lock().unwrap_or_else(|e| e.into_inner());
    let mut out = Vec::with_capacity(req.ticks as usize);
    for _ in 0..req.ticks {
        out.push(st.tick(req.dt_s).map_err(|e| ApiError::BadRequest(e.to_string()))?);
    }
    Ok(Json(out))
}

#[derive(Serialize)]
struct SearchHit {
    chunk_id: String,
    score: f64,
    heading_path: Vec<String>,
    text: String,
}

#[derive(Serialize)]
struct SearchResults {
    query: String,
    k: usize,
    results: Vec<SearchHit>,
}

async fn search_kb(State(svc): AppState, Query(q): Params) -> Result<Json<SearchResults>, ApiError> {
    let query = q
        .get("q")
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| ApiError::BadRequest("q is required".into()))?
        .clone();
    let k = match q.get("k") {
        None => 3,
        Some(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|k| (1..=20).contains(k))
            .ok_or_else(|| ApiError::BadRequest(format!("k must be an integer in 1..=20, got {raw:?}")))?,
    };
    let index = svc.rig().index.current();
    let results = index
        .retrieve(&query, k)
        .into_iter()
        .filter_map(|hit| {
            let c = index.chunk(&hit.chunk_id)?;
            Some(SearchHit {
                chunk_id: hit.chunk_id,
                score: hit.score,
                heading_path: c.heading_path.clone(),
                text: c.text.clone(),
            })
        })
        .collect();
    Ok(Json(SearchResults { query, k, results }))
}

/// `after` is the `seq` of the last record the caller has seen.
async fn get_audit(State(svc): AppState, Query(q): Params) -> Result<Json<Vec<AuditRecord>>, ApiError> {
    let after = match q.get("after") {
        None => 0,
        Some(raw) => raw
            .parse::<u64>()
            .map_err(|_| ApiError::MalformedCursor(format!("after must be a non-negative integer seq, got {raw:?}")))?,
    };
    Ok(Json(svc.rig().audit.after(after)))
}
