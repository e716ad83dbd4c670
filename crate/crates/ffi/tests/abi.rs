use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use serde_json::{json, Value};

use homegoal_ffi::*;

fn c(text: &str) -> CString {
    CString::new(text).unwrap()
}

/// Takes ownership of a returned string.
unsafe fn take(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null());
    let text = CStr::from_ptr(ptr).to_str().unwrap().to_string();
    hg_string_free(ptr);
    text
}

unsafe fn take_json(ptr: *mut c_char) -> Value {
    serde_json::from_str(&take(ptr)).unwrap()
}

fn last_error() -> String {
    let ptr = hg_last_error();
    assert!(!ptr.is_null(), "no error recorded");
    unsafe { CStr::from_ptr(ptr) }.to_string_lossy().into_owned()
}

unsafe fn home(id: &str) -> *mut HgHome {
    let mut out = ptr::null_mut();
    assert_eq!(hg_home_builtin(c(id).as_ptr(), &mut out), HgStatus::Ok);
    out
}

fn interactive_fixtures() -> CString {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/llm/interactive.json");
    c(path.to_str().unwrap())
}

#[test]
fn errors_report_status_and_message() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(hg_home_builtin(c("h9").as_ptr(), &mut out), HgStatus::UnknownHome);
        assert!(out.is_null());
        assert!(last_error().contains("h9"));

        assert_eq!(hg_home_builtin(ptr::null(), &mut out), HgStatus::NullArgument);
        assert_eq!(hg_home_builtin(c("h1").as_ptr(), ptr::null_mut()), HgStatus::NullArgument);

        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(hg_home_builtin(bad.as_ptr().cast(), &mut out), HgStatus::InvalidUtf8);

        let devices = c(r#"{"room": {"gadget": {"power": "wattage"}}}"#);
        assert_eq!(hg_home_from_json(devices.as_ptr(), c("{}").as_ptr(), &mut out), HgStatus::TemplateInvalid);

        // A successful call clears the previous message.
        let h1 = home("h1");
        assert!(hg_last_error().is_null());
        hg_home_free(h1);
        hg_home_free(ptr::null_mut());
        hg_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(hg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn custom_home_digest_matches_core() {
    unsafe {
        let devices = r#"{"den": {"lamp": {"state": "bool", "brightness": "int"}}}"#;
        let sensors = r#"{"global": {"local_time": "time"}}"#;
        let mut h = ptr::null_mut();
        assert_eq!(hg_home_from_json(c(devices).as_ptr(), c(sensors).as_ptr(), &mut h), HgStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(hg_home_digest(h, &mut out), HgStatus::Ok);
        let expected = homegoal::home::HomeTemplate::parse(devices, sensors).unwrap().digest();
        assert_eq!(take(out), expected);
        assert_eq!(hg_home_devices_json(h, &mut out), HgStatus::Ok);
        assert_eq!(take_json(out)["den"]["lamp"]["brightness"], "int");
        hg_home_free(h);
    }
}

#[test]
fn classifier_covers_each_class() {
    unsafe {
        let h1 = home("h1");
        let cases = [
            (r#"{"livingroom": {"lamp": {"state": true}}, "explanation": "on"}"#, HgValidity::Valid),
            (r#"{"lamp": {"state": true}, "explanation": "on"}"#, HgValidity::InvalidRoomsStripped),
            (r#"{"kitchen": {"coffee_maker": {"state": true}}, "explanation": "brew"}"#, HgValidity::InvalidStructureMutated),
            ("{'livingroom': {'lamp': {'state': True}}}", HgValidity::InvalidMalformed),
        ];
        for (raw, expected) in cases {
            let mut class = HgValidity::Valid;
            assert_eq!(hg_classify_response(h1, c(raw).as_ptr(), HgGoal::Immediate, &mut class), HgStatus::Ok);
            assert_eq!(class, expected, "{raw}");
        }
        hg_home_free(h1);
    }
}

#[test]
fn simulator_applies_plans_and_fires_routines() {
    unsafe {
        let devices = c(r#"{
            "kitchen": {"coffee_maker": {"state": "bool", "strength": "str"}},
            "bedroom": {"blinds": {"position": "int"}}
        }"#);
        let sensors = c(r#"{"global": {"local_time": "time"}}"#);
        let mut h = ptr::null_mut();
        assert_eq!(hg_home_from_json(devices.as_ptr(), sensors.as_ptr(), &mut h), HgStatus::Ok);
        let mut sim = ptr::null_mut();
        assert_eq!(hg_sim_new(h, &mut sim), HgStatus::Ok);
        // The simulator keeps its own reference to the template.
        hg_home_free(h);

        let plan = c(r#"{"kitchen": {"coffee_maker": {"state": true, "strength": "strong"}}, "explanation": "coffee"}"#);
        let mut events = ptr::null_mut();
        assert_eq!(hg_sim_apply_plan(sim, plan.as_ptr(), &mut events), HgStatus::Ok);
        assert!(!take_json(events).as_array().unwrap().is_empty());

        let bad = c(r#"{"kitchen": {"coffee_maker": {"strength": 11}}, "explanation": "x"}"#);
        assert_ne!(hg_sim_apply_plan(sim, bad.as_ptr(), ptr::null_mut()), HgStatus::Ok);
        assert_eq!(hg_sim_apply_plan(sim, c("{").as_ptr(), ptr::null_mut()), HgStatus::InvalidJson);

        let routine = c(r#"{
            "trigger": {"global": {"local_time": "7:00am"}},
            "action": {"bedroom": {"blinds": {"position": 100}}},
            "explanation": "open the blinds at seven"
        }"#);
        let (mut id, mut duplicate) = (0u64, true);
        assert_eq!(hg_sim_install_routine(sim, routine.as_ptr(), &mut id, &mut duplicate), HgStatus::Ok);
        assert_eq!((id, duplicate), (1, false));
        assert_eq!(hg_sim_install_routine(sim, routine.as_ptr(), &mut id, &mut duplicate), HgStatus::Ok);
        assert_eq!((id, duplicate), (1, true));

        let tick = |ts: i64, time: &str| c(&json!({"timestamp": ts, "sensors": {"global": {"local_time": time}}}).to_string());
        let mut fired = ptr::null_mut();
        assert_eq!(hg_sim_tick(sim, tick(10, "6:59am").as_ptr(), &mut fired), HgStatus::Ok);
        assert_eq!(take_json(fired), json!([]));
        assert_eq!(hg_sim_tick(sim, tick(70, "7:00am").as_ptr(), &mut fired), HgStatus::Ok);
        assert_eq!(take_json(fired), json!([1]));
        assert_eq!(hg_sim_tick(sim, tick(130, "7:01am").as_ptr(), &mut fired), HgStatus::Ok);
        assert_eq!(take_json(fired), json!([]));
        assert_eq!(hg_sim_tick(sim, tick(100, "7:02am").as_ptr(), ptr::null_mut()), HgStatus::SnapshotInvalid);

        let mut state = ptr::null_mut();
        assert_eq!(hg_sim_state_json(sim, &mut state), HgStatus::Ok);
        let state = take_json(state);
        assert_eq!(state["bedroom"]["blinds"]["position"], 100);
        assert_eq!(state["kitchen"]["coffee_maker"]["strength"], "strong");

        let mut routines = ptr::null_mut();
        assert_eq!(hg_sim_routines_json(sim, &mut routines), HgStatus::Ok);
        assert_eq!(take_json(routines)[0]["fire_count"], 1);
        assert_eq!(hg_sim_remove_routine(sim, 1), HgStatus::Ok);
        assert_eq!(hg_sim_remove_routine(sim, 1), HgStatus::SimulatorRejected);

        let mut log = ptr::null_mut();
        assert_eq!(hg_sim_log_json(sim, &mut log), HgStatus::Ok);
        assert!(take_json(log).as_array().unwrap().len() >= 4);
        hg_sim_free(sim);
    }
}

#[test]
fn agent_reviews_and_executes_plans() {
    unsafe {
        let studio = home("studio");
        let mut agent = ptr::null_mut();
        assert_eq!(hg_agent_new(studio, interactive_fixtures().as_ptr(), ptr::null(), &mut agent), HgStatus::Ok);
        hg_home_free(studio);

        let mut out = ptr::null_mut();
        let verdict = c(r#"{"verdict": "accept"}"#);
        assert_eq!(hg_agent_resolve(agent, 1, verdict.as_ptr(), &mut out), HgStatus::NoPendingPlan);

        let text = c("Do something fun with the lights in the studio.");
        assert_eq!(hg_agent_message(agent, text.as_ptr(), &mut out), HgStatus::Ok);
        let reply = take_json(out);
        assert_eq!(reply["outcome"], "plan_proposed");
        assert!(!reply["explanation"].as_str().unwrap().is_empty());
        let plan_id = reply["plan_id"].as_u64().unwrap();

        // Nothing changes before acceptance.
        assert_eq!(hg_agent_state_json(agent, &mut out), HgStatus::Ok);
        assert_eq!(take_json(out)["studio"]["left_lamp"]["state"], false);

        assert_eq!(hg_agent_resolve(agent, plan_id + 5, verdict.as_ptr(), &mut out), HgStatus::UnknownPlan);
        assert_eq!(hg_agent_resolve(agent, plan_id, c(r#"{"verdict": 3}"#).as_ptr(), &mut out), HgStatus::InvalidArgument);
        assert_eq!(hg_agent_resolve(agent, plan_id, verdict.as_ptr(), &mut out), HgStatus::Ok);
        assert_eq!(take_json(out)["accepted"], true);

        assert_eq!(hg_agent_state_json(agent, &mut out), HgStatus::Ok);
        let state = take_json(out);
        assert_eq!(state["studio"]["left_lamp"]["state"], true);
        assert_eq!(state["studio"]["right_lamp"]["brightness"], 254);
        hg_agent_free(agent);
    }
}

#[test]
fn agent_installs_routines_and_revises_on_critique() {
    unsafe {
        let studio = home("studio");
        let mut agent = ptr::null_mut();
        let mode = c("full_split");
        assert_eq!(hg_agent_new(studio, interactive_fixtures().as_ptr(), mode.as_ptr(), &mut agent), HgStatus::Ok);
        hg_home_free(studio);

        let mut out = ptr::null_mut();
        let text = c("I'm getting home at 5:00 today, can you make the living room nice before I get here?");
        assert_eq!(hg_agent_message(agent, text.as_ptr(), &mut out), HgStatus::Ok);
        let reply = take_json(out);
        assert_eq!(reply["goal"], "persistent");
        let first = reply["plan_id"].as_u64().unwrap();

        let critique = c(r#"{"verdict": "critique", "critique": "Leave the guitar amp off."}"#);
        assert_eq!(hg_agent_resolve(agent, first, critique.as_ptr(), &mut out), HgStatus::Ok);
        let revised = take_json(out);
        assert_eq!(revised["accepted"], false);
        assert_eq!(revised["revised_plan"]["action"]["studio"]["guitar_amp_plug"]["state"], false);
        let second = revised["revised_plan_id"].as_u64().unwrap();

        assert_eq!(hg_agent_resolve(agent, second, c(r#"{"verdict": "accept"}"#).as_ptr(), &mut out), HgStatus::Ok);
        let accepted = take_json(out);
        assert_eq!((accepted["routine_id"].as_u64(), accepted["duplicate"].as_bool()), (Some(1), Some(false)));

        let tick = c(r#"{"timestamp": 60, "sensors": {"global": {"local_time": "5:00pm", "weather": "clear"}}}"#);
        assert_eq!(hg_agent_tick(agent, tick.as_ptr(), &mut out), HgStatus::Ok);
        assert_eq!(take_json(out), json!([1]));
        assert_eq!(hg_agent_state_json(agent, &mut out), HgStatus::Ok);
        assert_eq!(take_json(out)["livingroom"]["stereo"]["playlist"], "ambient");
        hg_agent_free(agent);
    }
}

#[test]
fn agent_rejects_bad_setup() {
    unsafe {
        let h3 = home("h3");
        let mut agent = ptr::null_mut();
        let missing = c("/nonexistent/fixtures.json");
        assert_eq!(hg_agent_new(h3, missing.as_ptr(), ptr::null(), &mut agent), HgStatus::FixtureInvalid);
        let mode = c("everything_at_once");
        assert_eq!(hg_agent_new(h3, interactive_fixtures().as_ptr(), mode.as_ptr(), &mut agent), HgStatus::InvalidArgument);
        assert!(agent.is_null());
        hg_home_free(h3);
    }
}
