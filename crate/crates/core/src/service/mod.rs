//! HTTP and server-sent-events API over the chain, simulator and reports.

mod events;
mod routes;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio_util::sync::CancellationToken;

use crate::chain::{Chain, ChainOutcome, SessionError, SessionState, StepEvent, Verdict};
use crate::home::{builtin_home, studio_apartment, BuiltinHomeId, HomeTemplate};
use crate::plan::{diff_plan, ActionPlan, GoalType};
use crate::sim::{SimError, SimHandle, Simulator};

pub use events::{ui_events_from_log, EventStream, UiEvent, UiEventRecord};
pub use routes::router;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Sessions untouched for this long are dropped.
    pub idle_timeout: Duration,
    /// Execute every proposed plan without waiting for a verdict.
    pub auto_accept: bool,
    /// Holds one `<run-id>/report.json` per evaluation run.
    pub reports_dir: PathBuf,
    /// Home used when a create request names none.
    pub default_home: String,
    /// Served at `/` when set.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            idle_timeout: Duration::from_secs(30 * 60),
            auto_accept: false,
            reports_dir: PathBuf::from("reports"),
            default_home: "h3".into(),
            static_dir: None,
        }
    }
}

/// Error body `{code, message}` with its status.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn session_not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "SessionNotFound", format!("no session {id}"))
    }

    fn session_expired(id: &str) -> Self {
        ApiError::new(StatusCode::GONE, "SessionExpired", format!("session {id} expired"))
    }

    fn busy() -> Self {
        ApiError::new(StatusCode::CONFLICT, "Busy", "a request for this session is still running")
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Closed => ApiError::internal("simulator stopped"),
            SimError::UnknownRoutine(id) => {
                ApiError::new(StatusCode::NOT_FOUND, "RoutineNotFound", format!("no routine {id}"))
            }
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "SimulatorRejected", other.to_string()),
        }
    }
}

/// The built-in homes by id, including the studio apartment.
pub fn home_by_id(id: &str) -> Option<HomeTemplate> {
    match id.trim().to_ascii_lowercase().as_str() {
        "studio" => Some(studio_apartment()),
        other => other.parse::<BuiltinHomeId>().ok().map(builtin_home),
    }
}

pub struct LiveSession {
    pub id: String,
    pub home: String,
    pub created_at: DateTime<Utc>,
    pub auto_accept: bool,
    pub template: Arc<HomeTemplate>,
    pub sim: SimHandle,
    pub events: EventStream,
    dialogue: tokio::sync::Mutex<SessionState>,
    busy: AtomicBool,
    last_active: Mutex<Instant>,
    cancel: CancellationToken,
}

impl LiveSession {
    fn touch(&self) {
        *self.last_active.lock().expect("activity lock") = Instant::now();
    }

    fn idle_for(&self) -> Duration {
        self.last_active.lock().expect("activity lock").elapsed()
    }

    pub fn is_busy(&self) -> bool {
        self.busy.load(Ordering::SeqCst)
    }

    fn claim(&self) -> Result<BusyGuard<'_>, ApiError> {
        self.busy
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .map(|_| BusyGuard(&self.busy))
            .map_err(|_| ApiError::busy())
    }
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

/// Shared service state.
pub struct Service {
    pub chain: Arc<Chain>,
    pub config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
    expired: Mutex<HashSet<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CreateSession {
    pub home: Option<String>,
    /// `{"devices": {...}, "sensors": {...}}`, used instead of `home`.
    pub template: Option<Value>,
    pub label: Option<String>,
    pub auto_accept: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionInfo {
    pub id: String,
    pub home: String,
    pub created_at: DateTime<Utc>,
}

impl Service {
    pub fn new(chain: Arc<Chain>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Service { chain, config, sessions: Mutex::default(), expired: Mutex::default() })
    }

    pub fn create_session(&self, request: &CreateSession) -> Result<SessionInfo, ApiError> {
        let template = match (&request.template, &request.home) {
            (Some(doc), _) => {
                let invalid = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "TemplateInvalid", m);
                let devices = doc.get("devices").ok_or_else(|| invalid("template needs a devices document".into()))?;
                let sensors = doc.get("sensors").ok_or_else(|| invalid("template needs a sensors document".into()))?;
                let template = HomeTemplate::from_values(devices, sensors).map_err(|e| invalid(e.to_string()))?;
                template.with_label(request.label.clone().unwrap_or_else(|| "custom".into()))
            }
            (None, home) => {
                let id = home.as_deref().unwrap_or(&self.config.default_home);
                home_by_id(id).ok_or_else(|| {
                    ApiError::new(StatusCode::BAD_REQUEST, "TemplateInvalid", format!("unknown home {id}"))
                })?
            }
        };
        let home = template.label().unwrap_or("custom").to_string();
        let template = Arc::new(template);
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Arc::new(LiveSession {
            id: id.clone(),
            home: home.clone(),
            created_at: Utc::now(),
            auto_accept: request.auto_accept.unwrap_or(self.config.auto_accept),
            template: template.clone(),
            sim: SimHandle::spawn(Simulator::new(template.clone())),
            events: EventStream::default(),
            dialogue: tokio::sync::Mutex::new(SessionState::new(id.clone(), template)),
            busy: AtomicBool::new(false),
            last_active: Mutex::new(Instant::now()),
            cancel: CancellationToken::new(),
        });
        let info = SessionInfo { id: id.clone(), home, created_at: session.created_at };
        self.sessions.lock().expect("session table lock").insert(id, session);
        Ok(info)
    }

    /// A live session, refreshed. Idle sessions expire here as well as in [`Service::reap`].
    pub fn session(&self, id: &str) -> Result<Arc<LiveSession>, ApiError> {
        let mut sessions = self.sessions.lock().expect("session table lock");
        let Some(session) = sessions.get(id).cloned() else {
            return Err(if self.expired.lock().expect("expired lock").contains(id) {
                ApiError::session_expired(id)
            } else {
                ApiError::session_not_found(id)
            });
        };
        if !session.is_busy() && session.idle_for() > self.config.idle_timeout {
            sessions.remove(id);
            self.expire(&session);
            return Err(ApiError::session_expired(id));
        }
        session.touch();
        Ok(session)
    }

    pub fn sessions(&self) -> Vec<Arc<LiveSession>> {
        let mut all: Vec<_> = self.sessions.lock().expect("session table lock").values().cloned().collect();
        all.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        all
    }

    fn expire(&self, session: &LiveSession) {
        session.cancel.cancel();
        self.expired.lock().expect("expired lock").insert(session.id.clone());
    }

    /// Drop idle sessions; returns how many went.
    pub fn reap(&self) -> usize {
        let mut sessions = self.sessions.lock().expect("session table lock");
        let stale: Vec<String> = sessions
            .values()
            .filter(|s| !s.is_busy() && s.idle_for() > self.config.idle_timeout)
            .map(|s| s.id.clone())
            .collect();
        for id in &stale {
            if let Some(session) = sessions.remove(id) {
                self.expire(&session);
            }
        }
        stale.len()
    }

    /// Start a chain run for a message; the outcome arrives as events.
    pub fn post_message(
        self: &Arc<Self>,
        session: Arc<LiveSession>,
        text: String,
        goal: Option<GoalType>,
    ) -> Result<(), ApiError> {
        if text.trim().is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", "message text is empty"));
        }
        session.claim().map(std::mem::forget)?;
        let service = self.clone();
        tokio::spawn(async move {
            let _busy = BusyGuard(&session.busy);
            service.run_message(&session, &text, goal).await;
            session.touch();
        });
        Ok(())
    }

    async fn run_message(&self, session: &Arc<LiveSession>, text: &str, goal: Option<GoalType>) {
        let mut dialogue = session.dialogue.lock().await;
        let observer = observer_for(session);
        let result = dialogue
            .post_message_observed(&self.chain, text, goal, &session.cancel, Some(&observer))
            .await;
        let trace = result.trace;
        match (trace.outcome, result.plan_id, &trace.parsed_plan) {
            (ChainOutcome::PlanProposed, Some(plan_id), Some(plan)) => {
                self.announce_plan(session, &dialogue.template, plan_id, plan);
                if session.auto_accept {
                    let verdict = Verdict::Accept;
                    if let Err(e) = self.resolve_locked(session, &mut dialogue, plan_id, &verdict).await {
                        session.events.push(UiEvent::Message { outcome: ChainOutcome::Error, utterance: e.message });
                    }
                }
            }
            _ if result.needs_clarification => {
                session.events.push(UiEvent::NeedsClarification { utterance: trace.utterance });
            }
            (outcome, _, _) => {
                session.events.push(UiEvent::Message { outcome, utterance: trace.utterance });
            }
        }
    }

    fn announce_plan(&self, session: &LiveSession, template: &HomeTemplate, plan_id: u64, plan: &ActionPlan) {
        session.events.push(UiEvent::PlanProposed {
            plan_id,
            plan: plan.to_json(),
            explanation: plan.explanation().to_string(),
            diff: diff_plan(template, plan),
        });
    }

    /// Accept or critique the pending plan. Fails fast when nothing matches;
    /// otherwise the work continues in the background.
    pub async fn resolve_plan(
        self: &Arc<Self>,
        session: Arc<LiveSession>,
        plan_id: u64,
        verdict: Verdict,
    ) -> Result<(), ApiError> {
        let guard = session.claim()?;
        {
            let dialogue = session.dialogue.lock().await;
            match &dialogue.pending {
                None => return Err(session_error(SessionError::NoPendingPlan)),
                Some(p) if p.id != plan_id => return Err(session_error(SessionError::UnknownPlan(plan_id))),
                Some(_) => {}
            }
        }
        std::mem::forget(guard);
        let service = self.clone();
        tokio::spawn(async move {
            let _busy = BusyGuard(&session.busy);
            let mut dialogue = session.dialogue.lock().await;
            if let Err(e) = service.resolve_locked(&session, &mut dialogue, plan_id, &verdict).await {
                session.events.push(UiEvent::Message { outcome: ChainOutcome::Error, utterance: e.message });
            }
            session.touch();
        });
        Ok(())
    }

    async fn resolve_locked(
        &self,
        session: &Arc<LiveSession>,
        dialogue: &mut SessionState,
        plan_id: u64,
        verdict: &Verdict,
    ) -> Result<(), ApiError> {
        let observer = observer_for(session);
        let (result, new_id) = dialogue
            .resolve_observed(&self.chain, plan_id, verdict, &session.cancel, Some(&observer))
            .await
            .map_err(session_error)?;
        if let Some(plan) = result.accepted {
            self.execute(session, plan).await?;
            return Ok(());
        }
        match (new_id, &result.revised) {
            (Some(id), Some(plan)) => self.announce_plan(session, &dialogue.template, id, plan),
            _ => {
                session.events.push(UiEvent::Message { outcome: result.outcome, utterance: result.utterance });
            }
        }
        Ok(())
    }

    async fn execute(&self, session: &LiveSession, plan: ActionPlan) -> Result<(), ApiError> {
        match plan {
            ActionPlan::Immediate { .. } => {
                let events = session.sim.exec(move |sim| sim.apply_plan(&plan)).await??;
                session.events.extend(ui_events_from_log(&events));
            }
            ActionPlan::Routine { .. } => {
                let installed = session.sim.exec(move |sim| sim.install_routine(&plan)).await??;
                session.events.push(UiEvent::RoutineInstalled {
                    routine_id: installed.routine_id,
                    duplicate: installed.duplicate,
                });
            }
        }
        Ok(())
    }
}

fn observer_for(session: &Arc<LiveSession>) -> impl Fn(StepEvent) + Send + Sync + 'static {
    let session = session.clone();
    move |e: StepEvent| {
        session.events.push(UiEvent::ChainStep { step: e.step, attempt: e.attempt, status: e.status });
    }
}

fn session_error(e: SessionError) -> ApiError {
    match e {
        SessionError::NoPendingPlan => ApiError::new(StatusCode::CONFLICT, "NoPendingPlan", e.to_string()),
        SessionError::UnknownPlan(_) => ApiError::new(StatusCode::NOT_FOUND, "UnknownPlan", e.to_string()),
        SessionError::Chain(inner) => ApiError::internal(inner.to_string()),
    }
}
