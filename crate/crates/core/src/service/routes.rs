use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::chain::Verdict;
use crate::eval::read_report;
use crate::plan::{diff_plan, GoalType};
use crate::sim::{parse_sensor_values, SensorSnapshot};

use super::{ui_events_from_log, ApiError, CreateSession, LiveSession, Service, UiEvent, UiEventRecord};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.body_text()))
}

pub fn router(service: Arc<Service>) -> Router {
    let static_dir = service.config.static_dir.clone();
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(session_state))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/plans/{pid}/resolve", post(resolve_plan))
        .route("/sessions/{id}/events", get(session_events))
        .route("/sessions/{id}/sensors", post(post_sensors))
        .route("/routines", get(list_routines))
        .route("/routines/{id}", delete(delete_routine))
        .route("/reports/{run_id}", get(get_report))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

async fn create_session(
    State(service): State<Arc<Service>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let info = service.create_session(&body(payload)?)?;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(info).expect("session info serializes"))))
}

async fn session_state(State(service): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = service.session(&id)?;
    let view = session.sim.view();
    // The dialogue is locked for the whole of a chain run; report it as busy then.
    let (pending, awaiting, history) = match session.dialogue.try_lock() {
        Ok(dialogue) => (
            dialogue.pending.as_ref().map(|p| {
                json!({
                    "plan_id": p.id,
                    "plan": p.proposal.plan.to_json(),
                    "explanation": p.proposal.plan.explanation(),
                    "diff": diff_plan(&session.template, &p.proposal.plan),
                })
            }),
            dialogue.episode.as_ref().is_some_and(|e| e.awaiting_clarification),
            Some(dialogue.history.clone()),
        ),
        Err(_) => (None, false, None),
    };
    Ok(Json(json!({
        "id": session.id,
        "home": session.home,
        "created_at": session.created_at,
        "busy": session.is_busy(),
        "auto_accept": session.auto_accept,
        "state": view.state.to_json(),
        "routines": view.routines,
        "clock": view.clock,
        "pending": pending,
        "awaiting_clarification": awaiting,
        "history": history,
        "event_cursor": session.events.len(),
    })))
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    text: String,
    goal: Option<GoalType>,
}

async fn post_message(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    payload: Result<Json<MessageBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let session = service.session(&id)?;
    let message = body(payload)?;
    service.post_message(session, message.text, message.goal)?;
    Ok((StatusCode::ACCEPTED, Json(json!({"accepted": true}))))
}

async fn resolve_plan(
    State(service): State<Arc<Service>>,
    Path((id, pid)): Path<(String, u64)>,
    payload: Result<Json<Verdict>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let session = service.session(&id)?;
    let verdict = body(payload)?;
    service.resolve_plan(session, pid, verdict).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({"accepted": true}))))
}

#[derive(Debug, Deserialize)]
struct CursorQuery {
    cursor: Option<u64>,
}

/// Replays from `cursor` (or one past `Last-Event-ID`), then follows live.
async fn session_events(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    Query(query): Query<CursorQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let session = service.session(&id)?;
    let last_seen = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(|seq| seq + 1);
    let cursor = query.cursor.or(last_seen).unwrap_or(0);
    Ok(Sse::new(event_stream(session, cursor)).keep_alive(KeepAlive::default()))
}

fn sse_event(record: &UiEventRecord) -> Event {
    Event::default()
        .id(record.seq.to_string())
        .event(record.event.name())
        .data(serde_json::to_string(record).expect("ui event serializes"))
}

fn event_stream(session: Arc<LiveSession>, cursor: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let watch = session.events.watch();
    stream::unfold((session, watch, cursor), |(session, mut watch, cursor)| async move {
        loop {
            let batch = session.events.since(cursor);
            if !batch.is_empty() {
                let next = cursor + batch.len() as u64;
                let events: Vec<_> = batch.iter().map(|r| Ok::<_, Infallible>(sse_event(r))).collect();
                return Some((stream::iter(events), (session, watch, next)));
            }
            tokio::select! {
                changed = watch.changed() => if changed.is_err() { return None },
                _ = session.cancel.cancelled() => return None,
            }
        }
    })
    .flatten()
}

async fn post_sensors(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    payload: Result<Json<Value>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let session = service.session(&id)?;
    let doc = body(payload)?;
    let invalid = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "SnapshotInvalid", m);
    let timestamp = doc.get("timestamp").and_then(Value::as_i64).ok_or_else(|| invalid("timestamp missing".into()))?;
    let sensors = doc.get("sensors").ok_or_else(|| invalid("sensors missing".into()))?;
    let template = session.template.clone();
    let values = parse_sensor_values(&template, sensors).map_err(|e| invalid(e.to_string()))?;
    let snapshot = SensorSnapshot::new(&template, timestamp, values).map_err(|e| invalid(e.to_string()))?;
    let result = session.sim.exec(move |sim| sim.tick(snapshot)).await?.map_err(|e| invalid(e.to_string()))?;
    session.events.extend(ui_events_from_log(&result.events));
    Ok(Json(json!({"fired": result.fired})))
}

#[derive(Debug, Deserialize)]
struct RoutineQuery {
    session: Option<String>,
}

/// Routine ids are `<session>:<n>` because each session has its own simulator.
fn routine_key(session: &str, id: u64) -> String {
    format!("{session}:{id}")
}

async fn list_routines(
    State(service): State<Arc<Service>>,
    Query(query): Query<RoutineQuery>,
) -> ApiResult<Json<Value>> {
    let sessions = match &query.session {
        Some(id) => vec![service.session(id)?],
        None => service.sessions(),
    };
    let mut out = Vec::new();
    for session in sessions {
        for routine in &session.sim.view().routines {
            let mut entry = serde_json::to_value(routine).expect("routine serializes");
            entry["id"] = json!(routine_key(&session.id, routine.id));
            entry["routine_id"] = json!(routine.id);
            entry["session"] = json!(session.id);
            out.push(entry);
        }
    }
    Ok(Json(json!({"routines": out})))
}

async fn delete_routine(State(service): State<Arc<Service>>, Path(key): Path<String>) -> ApiResult<StatusCode> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "RoutineNotFound", format!("no routine {key}"));
    let (session_id, number) = key.rsplit_once(':').ok_or_else(not_found)?;
    let routine_id: u64 = number.parse().map_err(|_| not_found())?;
    let session = service.session(session_id)?;
    session.sim.exec(move |sim| sim.remove_routine(routine_id)).await??;
    session.events.push(UiEvent::RoutineRemoved { routine_id });
    Ok(StatusCode::NO_CONTENT)
}

async fn get_report(State(service): State<Arc<Service>>, Path(run_id): Path<String>) -> ApiResult<Json<Value>> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "ReportNotFound", format!("no report {run_id}"));
    let safe = !run_id.is_empty()
        && run_id != "."
        && run_id != ".."
        && run_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if !safe {
        return Err(not_found());
    }
    let dir = service.config.reports_dir.join(&run_id);
    if !dir.join("report.json").is_file() {
        return Err(not_found());
    }
    let report = read_report(&dir).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}
