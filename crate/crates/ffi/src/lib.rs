//! C ABI over the homegoal planner, validity classifier and simulator.
//!
//! Strings cross the boundary as NUL-terminated UTF-8. Every string written
//! through an `out` pointer belongs to the caller and is released with
//! [`hg_string_free`]. Handles are opaque and released with their `_free`
//! function. A call that fails returns a non-zero [`HgStatus`] and leaves a
//! message for the calling thread in [`hg_last_error`]; `out` pointers are
//! untouched on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use tokio_util::sync::CancellationToken;

use homegoal::chain::{Chain, ChainConfig, ChainMode, SessionError, SessionState, Verdict};
use homegoal::home::HomeTemplate;
use homegoal::llm::{Gateway, ScriptedFixture};
use homegoal::plan::{classify_validity, parse_plan, ActionPlan, GoalType, ValidityClass};
use homegoal::service::home_by_id;
use homegoal::sim::{parse_sensor_values, SensorSnapshot, Simulator};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidArgument = 4,
    UnknownHome = 5,
    TemplateInvalid = 6,
    PlanInvalid = 7,
    SimulatorRejected = 8,
    SnapshotInvalid = 9,
    FixtureInvalid = 10,
    NoPendingPlan = 11,
    UnknownPlan = 12,
    ChainFailed = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgValidity {
    Valid = 0,
    InvalidRoomsStripped = 1,
    InvalidStructureMutated = 2,
    InvalidMalformed = 3,
}

impl From<ValidityClass> for HgValidity {
    fn from(class: ValidityClass) -> Self {
        match class {
            ValidityClass::Valid => HgValidity::Valid,
            ValidityClass::InvalidRoomsStripped => HgValidity::InvalidRoomsStripped,
            ValidityClass::InvalidStructureMutated => HgValidity::InvalidStructureMutated,
            ValidityClass::InvalidMalformed => HgValidity::InvalidMalformed,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgGoal {
    Immediate = 0,
    Persistent = 1,
}

impl From<HgGoal> for GoalType {
    fn from(goal: HgGoal) -> Self {
        match goal {
            HgGoal::Immediate => GoalType::Immediate,
            HgGoal::Persistent => GoalType::Persistent,
        }
    }
}

/// A validated home template.
pub struct HgHome {
    template: Arc<HomeTemplate>,
}

/// Device state, routines and event log for one home.
pub struct HgSimulator {
    sim: Simulator,
}

/// A dialogue session driving the chain against scripted responses, with
/// its own simulator. Accepted plans are executed on that simulator.
pub struct HgAgent {
    runtime: tokio::runtime::Runtime,
    chain: Chain,
    session: SessionState,
    sim: Simulator,
    cancel: CancellationToken,
}

struct Failure {
    status: HgStatus,
    message: String,
}

impl Failure {
    fn new(status: HgStatus, message: impl Into<String>) -> Self {
        Failure { status, message: message.into() }
    }
}

type FfiResult<T> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(body: impl FnOnce() -> FfiResult<()>) -> HgStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HgStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {message}"));
            HgStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` is null or a NUL-terminated string valid for the call.
unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> FfiResult<&'a str> {
    if ptr.is_null() {
        return Err(Failure::new(HgStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| Failure::new(HgStatus::InvalidUtf8, format!("{name}: {e}")))
}

/// # Safety
/// As [`str_arg`].
unsafe fn json_arg(ptr: *const c_char, name: &str) -> FfiResult<Value> {
    let text = str_arg(ptr, name)?;
    serde_json::from_str(text).map_err(|e| Failure::new(HgStatus::InvalidJson, format!("{name}: {e}")))
}

/// # Safety
/// `ptr` is null or points to a live `T` not aliased mutably elsewhere.
unsafe fn handle<'a, T>(ptr: *const T, name: &str) -> FfiResult<&'a T> {
    ptr.as_ref().ok_or_else(|| Failure::new(HgStatus::NullArgument, format!("{name} is null")))
}

/// # Safety
/// As [`handle`], with exclusive access for the call.
unsafe fn handle_mut<'a, T>(ptr: *mut T, name: &str) -> FfiResult<&'a mut T> {
    ptr.as_mut().ok_or_else(|| Failure::new(HgStatus::NullArgument, format!("{name} is null")))
}

fn check_out<T>(ptr: *mut T, name: &str) -> FfiResult<()> {
    if ptr.is_null() {
        return Err(Failure::new(HgStatus::NullArgument, format!("{name} is null")));
    }
    Ok(())
}

/// # Safety
/// `out` was checked non-null and is writable.
unsafe fn write_string(out: *mut *mut c_char, text: String) {
    // JSON and the library's own strings never carry interior NULs.
    *out = CString::new(text).expect("no interior NUL").into_raw();
}

/// # Safety
/// `out` is null or writable.
unsafe fn write_json(out: *mut *mut c_char, value: &Value) {
    if !out.is_null() {
        write_string(out, value.to_string());
    }
}

/// The message for the last failing call on this thread, or null. Valid
/// until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn hg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `text` is null or came from this library and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn hg_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

/// One of the shipped homes: `h1`, `h2`, `h3` or `studio`.
///
/// # Safety
/// `id` is a valid C string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_home_builtin(id: *const c_char, out: *mut *mut HgHome) -> HgStatus {
    guard(|| {
        let id = str_arg(id, "id")?;
        check_out(out, "out")?;
        let template = home_by_id(id).ok_or_else(|| Failure::new(HgStatus::UnknownHome, format!("no home {id:?}")))?;
        *out = Box::into_raw(Box::new(HgHome { template: Arc::new(template) }));
        Ok(())
    })
}

/// A home from its devices and sensors documents.
///
/// # Safety
/// `devices` and `sensors` are valid C strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_home_from_json(
    devices: *const c_char,
    sensors: *const c_char,
    out: *mut *mut HgHome,
) -> HgStatus {
    guard(|| {
        let devices = str_arg(devices, "devices")?;
        let sensors = str_arg(sensors, "sensors")?;
        check_out(out, "out")?;
        let template = HomeTemplate::parse(devices, sensors)
            .map_err(|e| Failure::new(HgStatus::TemplateInvalid, e.to_string()))?;
        *out = Box::into_raw(Box::new(HgHome { template: Arc::new(template) }));
        Ok(())
    })
}

/// Hex SHA-256 of the canonical template encoding.
///
/// # Safety
/// `home` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_home_digest(home: *const HgHome, out: *mut *mut c_char) -> HgStatus {
    guard(|| {
        let home = handle(home, "home")?;
        check_out(out, "out")?;
        write_string(out, home.template.digest());
        Ok(())
    })
}

/// The devices document, canonical JSON.
///
/// # Safety
/// `home` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_home_devices_json(home: *const HgHome, out: *mut *mut c_char) -> HgStatus {
    guard(|| {
        let home = handle(home, "home")?;
        check_out(out, "out")?;
        write_json(out, &home.template.devices_value());
        Ok(())
    })
}

/// # Safety
/// `home` is null or a handle not freed before. Simulators and agents made
/// from it stay valid.
#[no_mangle]
pub unsafe extern "C" fn hg_home_free(home: *mut HgHome) {
    if !home.is_null() {
        drop(Box::from_raw(home));
    }
}

/// Structural validity of a raw model response against `home`.
///
/// # Safety
/// `home` is a live handle; `raw` is a valid C string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_classify_response(
    home: *const HgHome,
    raw: *const c_char,
    goal: HgGoal,
    out: *mut HgValidity,
) -> HgStatus {
    guard(|| {
        let home = handle(home, "home")?;
        let raw = str_arg(raw, "raw")?;
        check_out(out, "out")?;
        *out = classify_validity(&home.template, raw, goal.into()).into();
        Ok(())
    })
}

/// A simulator at the home's initial state.
///
/// # Safety
/// `home` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_new(home: *const HgHome, out: *mut *mut HgSimulator) -> HgStatus {
    guard(|| {
        let home = handle(home, "home")?;
        check_out(out, "out")?;
        *out = Box::into_raw(Box::new(HgSimulator { sim: Simulator::new(home.template.clone()) }));
        Ok(())
    })
}

/// # Safety
/// `sim` is null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_free(sim: *mut HgSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Current device state as room → device → settings JSON.
///
/// # Safety
/// `sim` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_state_json(sim: *const HgSimulator, out: *mut *mut c_char) -> HgStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        check_out(out, "out")?;
        write_json(out, &sim.sim.state().to_json());
        Ok(())
    })
}

/// Installed routines as a JSON array.
///
/// # Safety
/// `sim` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_routines_json(sim: *const HgSimulator, out: *mut *mut c_char) -> HgStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        check_out(out, "out")?;
        let routines: Vec<_> = sim.sim.routines().collect();
        write_json(out, &json!(routines));
        Ok(())
    })
}

/// The event log as a JSON array.
///
/// # Safety
/// `sim` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_log_json(sim: *const HgSimulator, out: *mut *mut c_char) -> HgStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        check_out(out, "out")?;
        write_json(out, &json!(sim.sim.log().entries()));
        Ok(())
    })
}

fn plan_from(template: &HomeTemplate, doc: &Value, goal: GoalType) -> FfiResult<ActionPlan> {
    parse_plan(template, doc, goal).map_err(|e| Failure::new(HgStatus::PlanInvalid, e.to_string()))
}

fn rejected(e: impl ToString) -> Failure {
    Failure::new(HgStatus::SimulatorRejected, e.to_string())
}

/// Applies an immediate plan. `out_events` may be null; otherwise it
/// receives the logged events as a JSON array.
///
/// # Safety
/// `sim` is a live handle; `plan_json` is a valid C string; `out_events` is
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_apply_plan(
    sim: *mut HgSimulator,
    plan_json: *const c_char,
    out_events: *mut *mut c_char,
) -> HgStatus {
    guard(|| {
        let sim = handle_mut(sim, "sim")?;
        let doc = json_arg(plan_json, "plan_json")?;
        let plan = plan_from(sim.sim.template(), &doc, GoalType::Immediate)?;
        let events = sim.sim.apply_plan(&plan).map_err(rejected)?;
        write_json(out_events, &json!(events));
        Ok(())
    })
}

/// Installs a routine plan (`trigger`, `action`, `explanation`).
///
/// # Safety
/// `sim` is a live handle; `plan_json` is a valid C string; `out_id` and
/// `out_duplicate` are null or writable.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_install_routine(
    sim: *mut HgSimulator,
    plan_json: *const c_char,
    out_id: *mut u64,
    out_duplicate: *mut bool,
) -> HgStatus {
    guard(|| {
        let sim = handle_mut(sim, "sim")?;
        let doc = json_arg(plan_json, "plan_json")?;
        let plan = plan_from(sim.sim.template(), &doc, GoalType::Persistent)?;
        let installed = sim.sim.install_routine(&plan).map_err(rejected)?;
        if !out_id.is_null() {
            *out_id = installed.routine_id;
        }
        if !out_duplicate.is_null() {
            *out_duplicate = installed.duplicate;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_remove_routine(sim: *mut HgSimulator, routine_id: u64) -> HgStatus {
    guard(|| {
        let sim = handle_mut(sim, "sim")?;
        sim.sim.remove_routine(routine_id).map_err(rejected)?;
        Ok(())
    })
}

fn tick(sim: &mut Simulator, doc: &Value) -> FfiResult<Vec<u64>> {
    let invalid = |m: String| Failure::new(HgStatus::SnapshotInvalid, m);
    let timestamp = doc.get("timestamp").and_then(Value::as_i64).ok_or_else(|| invalid("timestamp missing".into()))?;
    let sensors = doc.get("sensors").ok_or_else(|| invalid("sensors missing".into()))?;
    let template = sim.template().clone();
    let values = parse_sensor_values(&template, sensors).map_err(|e| invalid(e.to_string()))?;
    let snapshot = SensorSnapshot::new(&template, timestamp, values).map_err(|e| invalid(e.to_string()))?;
    Ok(sim.tick(snapshot).map_err(|e| invalid(e.to_string()))?.fired)
}

/// Feeds one sensor snapshot, `{"timestamp": <unix seconds>, "sensors": {...}}`.
/// `out_fired` may be null; otherwise it receives the fired routine ids as a
/// JSON array.
///
/// # Safety
/// `sim` is a live handle; `snapshot_json` is a valid C string; `out_fired`
/// is null or writable.
#[no_mangle]
pub unsafe extern "C" fn hg_sim_tick(
    sim: *mut HgSimulator,
    snapshot_json: *const c_char,
    out_fired: *mut *mut c_char,
) -> HgStatus {
    guard(|| {
        let sim = handle_mut(sim, "sim")?;
        let doc = json_arg(snapshot_json, "snapshot_json")?;
        write_json(out_fired, &json!(tick(&mut sim.sim, &doc)?));
        Ok(())
    })
}

/// An agent for `home` answering from the scripted fixture file or directory
/// at `fixtures_path`. `mode` names a chain mode; null means `full_split`.
///
/// # Safety
/// `home` is a live handle; `fixtures_path` is a valid C string; `mode` is
/// null or a valid C string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_agent_new(
    home: *const HgHome,
    fixtures_path: *const c_char,
    mode: *const c_char,
    out: *mut *mut HgAgent,
) -> HgStatus {
    guard(|| {
        let home = handle(home, "home")?;
        let path = str_arg(fixtures_path, "fixtures_path")?;
        let mode = if mode.is_null() { "full_split" } else { str_arg(mode, "mode")? };
        check_out(out, "out")?;
        let mode: ChainMode =
            mode.parse().map_err(|e: homegoal::chain::ChainError| Failure::new(HgStatus::InvalidArgument, e.to_string()))?;
        let fixture = ScriptedFixture::load(Path::new(path))
            .map_err(|e| Failure::new(HgStatus::FixtureInvalid, e.to_string()))?;
        let runtime = tokio::runtime::Builder::new_current_thread()
            .enable_time()
            .build()
            .map_err(|e| Failure::new(HgStatus::ChainFailed, e.to_string()))?;
        let chain = Chain::new(Arc::new(Gateway::scripted(fixture)), ChainConfig { mode, ..Default::default() });
        *out = Box::into_raw(Box::new(HgAgent {
            runtime,
            chain,
            session: SessionState::new("ffi", home.template.clone()),
            sim: Simulator::new(home.template.clone()),
            cancel: CancellationToken::new(),
        }));
        Ok(())
    })
}

/// # Safety
/// `agent` is null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn hg_agent_free(agent: *mut HgAgent) {
    if !agent.is_null() {
        let agent = Box::from_raw(agent);
        agent.cancel.cancel();
    }
}

/// Sends a command, or answers the last clarifying question. Writes
/// `{"outcome", "utterance", "goal", "plan_id", "plan", "explanation",
/// "needs_clarification"}`; `plan_id` is set when a plan awaits review.
///
/// # Safety
/// `agent` is a live handle; `text` is a valid C string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_agent_message(agent: *mut HgAgent, text: *const c_char, out: *mut *mut c_char) -> HgStatus {
    guard(|| {
        let agent = handle_mut(agent, "agent")?;
        let text = str_arg(text, "text")?;
        check_out(out, "out")?;
        let HgAgent { runtime, chain, session, cancel, .. } = agent;
        let result = runtime.block_on(session.post_message(chain, text, None, cancel));
        let explanation = session.pending.as_ref().map(|p| p.proposal.plan.explanation().to_string());
        write_json(
            out,
            &json!({
                "outcome": result.trace.outcome,
                "utterance": result.trace.utterance,
                "goal": result.trace.goal,
                "plan_id": result.plan_id,
                "plan": result.trace.plan,
                "explanation": explanation,
                "needs_clarification": result.needs_clarification,
            }),
        );
        Ok(())
    })
}

/// Resolves the pending plan with `{"verdict": "accept"}` or
/// `{"verdict": "critique", "critique": "..."}`. An accepted plan is executed
/// on the agent's simulator. Writes `{"outcome", "utterance", "accepted",
/// "routine_id", "duplicate", "revised_plan_id", "revised_plan"}`.
///
/// # Safety
/// `agent` is a live handle; `verdict_json` is a valid C string; `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hg_agent_resolve(
    agent: *mut HgAgent,
    plan_id: u64,
    verdict_json: *const c_char,
    out: *mut *mut c_char,
) -> HgStatus {
    guard(|| {
        let agent = handle_mut(agent, "agent")?;
        let doc = json_arg(verdict_json, "verdict_json")?;
        check_out(out, "out")?;
        let verdict: Verdict =
            serde_json::from_value(doc).map_err(|e| Failure::new(HgStatus::InvalidArgument, e.to_string()))?;
        let HgAgent { runtime, chain, session, sim, cancel } = agent;
        let (result, revised_id) =
            runtime.block_on(session.resolve(chain, plan_id, &verdict, cancel)).map_err(|e| match e {
                SessionError::NoPendingPlan => Failure::new(HgStatus::NoPendingPlan, e.to_string()),
                SessionError::UnknownPlan(_) => Failure::new(HgStatus::UnknownPlan, e.to_string()),
                SessionError::Chain(inner) => Failure::new(HgStatus::ChainFailed, inner.to_string()),
            })?;
        let (mut routine_id, mut duplicate) = (None, None);
        match &result.accepted {
            Some(plan @ ActionPlan::Immediate { .. }) => {
                sim.apply_plan(plan).map_err(rejected)?;
            }
            Some(plan @ ActionPlan::Routine { .. }) => {
                let installed = sim.install_routine(plan).map_err(rejected)?;
                routine_id = Some(installed.routine_id);
                duplicate = Some(installed.duplicate);
            }
            None => {}
        }
        write_json(
            out,
            &json!({
                "outcome": result.outcome,
                "utterance": result.utterance,
                "accepted": result.accepted.is_some(),
                "routine_id": routine_id,
                "duplicate": duplicate,
                "revised_plan_id": revised_id,
                "revised_plan": result.revised.as_ref().map(ActionPlan::to_json),
            }),
        );
        Ok(())
    })
}

/// The agent simulator's device state.
///
/// # Safety
/// `agent` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hg_agent_state_json(agent: *const HgAgent, out: *mut *mut c_char) -> HgStatus {
    guard(|| {
        let agent = handle(agent, "agent")?;
        check_out(out, "out")?;
        write_json(out, &agent.sim.state().to_json());
        Ok(())
    })
}

/// Feeds a sensor snapshot to the agent's simulator; see [`hg_sim_tick`].
///
/// # Safety
/// As [`hg_sim_tick`], with `agent` a live handle.
#[no_mangle]
pub unsafe extern "C" fn hg_agent_tick(
    agent: *mut HgAgent,
    snapshot_json: *const c_char,
    out_fired: *mut *mut c_char,
) -> HgStatus {
    guard(|| {
        let agent = handle_mut(agent, "agent")?;
        let doc = json_arg(snapshot_json, "snapshot_json")?;
        write_json(out_fired, &json!(tick(&mut agent.sim, &doc)?));
        Ok(())
    })
}
