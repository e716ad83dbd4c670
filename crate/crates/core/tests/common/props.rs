//! Property suites shared by the property and acceptance targets.
//!
//! Each suite runs a fixed number of cases from a deterministic seed and
//! returns the first failure, already shrunk, as text.

use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use serde_json::json;
use tokio_util::sync::CancellationToken;

use homegoal::chain::{subset_monotone, Chain, ChainConfig, ChainMode, ChainOutcome, SessionState, Verdict};
use homegoal::home::{validate_state, DeviceState, HomeTemplate};
use homegoal::llm::{estimate_cost, CostRates, FixtureRule, Gateway, ScriptedFixture};
use homegoal::plan::{classify_validity, parse_plan, ActionPlan, GoalType, ValidityClass};
use homegoal::prompt::PromptKind;
use homegoal::sim::Simulator;

use super::gen::{self, SimOp};
use super::oracle;

pub type Suite = (&'static str, fn(u32) -> Result<(), String>);

pub const SUITES: &[Suite] = &[
    ("template round-trip", template_round_trip),
    ("state round-trip", state_round_trip),
    ("plan round-trip", plan_round_trip),
    ("classify(serialize(plan)) = valid", classify_serialized_plan),
    ("classify is total and deterministic", classify_total),
    ("event-log replay = state", event_log_replay),
    ("unchanged snapshot fires nothing", unchanged_snapshot_quiet),
    ("tick = brute-force oracle", tick_matches_oracle),
    ("subset monotonicity", subset_monotonicity),
    ("no-relevance safety", no_relevance_safety),
    ("cost linearity", cost_linearity),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().enable_time().build().expect("runtime")
}

pub fn template_round_trip(cases: u32) -> Result<(), String> {
    check(cases, gen::template(), |t| {
        let (devices, sensors) = t.to_canonical_documents();
        let back = HomeTemplate::parse(&devices, &sensors).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.digest(), t.digest());
        prop_assert_eq!(back.to_canonical_documents(), (devices, sensors));
        Ok(())
    })
}

pub fn state_round_trip(cases: u32) -> Result<(), String> {
    let strategy = gen::template().prop_flat_map(|t| {
        let s = gen::full_state(&t);
        (Just(t), s)
    });
    check(cases, strategy, |(t, state)| {
        prop_assert!(validate_state(&t, &state).is_empty());
        let text = state.to_json().to_string();
        let back = DeviceState::from_json(&t, &serde_json::from_str(&text).unwrap())
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(validate_state(&t, &back).is_empty());
        prop_assert_eq!(back, state);
        Ok(())
    })
}

pub fn plan_round_trip(cases: u32) -> Result<(), String> {
    check(cases, gen::template_and_plan(), |(t, plan)| {
        let text = plan.to_json_string();
        let back = parse_plan(&t, &serde_json::from_str(&text).unwrap(), plan.goal_type())
            .map_err(|e| TestCaseError::fail(format!("{e}: {text}")))?;
        prop_assert_eq!(back, plan);
        Ok(())
    })
}

pub fn classify_serialized_plan(cases: u32) -> Result<(), String> {
    check(cases, gen::template_and_plan(), |(t, plan)| {
        let text = plan.to_json_string();
        prop_assert_eq!(classify_validity(&t, &text, plan.goal_type()), ValidityClass::Valid, "{}", text);
        let wrapped = format!("Here is the plan:\n```json\n{text}\n```\nEnjoy!");
        prop_assert_eq!(classify_validity(&t, &wrapped, plan.goal_type()), ValidityClass::Valid);
        Ok(())
    })
}

fn goal() -> impl Strategy<Value = GoalType> {
    prop_oneof![Just(GoalType::Immediate), Just(GoalType::Persistent)]
}

pub fn classify_total(cases: u32) -> Result<(), String> {
    let noise = prop_oneof![".{0,80}", "[{}\":,a-z ]{0,60}"];
    let strategy = (gen::template_and_plan(), noise, any::<prop::sample::Index>(), goal());
    check(cases, strategy, |((t, plan), noise, cut, goal)| {
        let first = classify_validity(&t, &noise, goal);
        prop_assert_eq!(first, classify_validity(&t, &noise, goal));
        prop_assert!(ValidityClass::ALL.contains(&first));
        let text = plan.to_json_string();
        let prefix = &text[..text.floor_char_boundary(cut.index(text.len()))];
        prop_assert_eq!(classify_validity(&t, prefix, plan.goal_type()), ValidityClass::InvalidMalformed, "{}", prefix);
        Ok(())
    })
}

fn stamped(ops: Vec<SimOp>) -> Vec<SimOp> {
    let mut clock = 0;
    ops.into_iter()
        .map(|op| match op {
            SimOp::Tick(s) => {
                clock += 30;
                SimOp::Tick(s.at(clock))
            }
            other => other,
        })
        .collect()
}

fn drive(sim: &mut Simulator, ops: &[SimOp]) -> Result<(), TestCaseError> {
    let fail = |e: homegoal::sim::SimError| TestCaseError::fail(e.to_string());
    let mut ids: Vec<u64> = Vec::new();
    for op in ops {
        match op {
            SimOp::Apply(plan) => {
                sim.apply_plan(plan).map_err(fail)?;
            }
            SimOp::Install(plan) => {
                let installed = sim.install_routine(plan).map_err(fail)?;
                if !installed.duplicate {
                    ids.push(installed.routine_id);
                }
            }
            SimOp::Tick(snapshot) => {
                sim.tick(snapshot.clone()).map_err(fail)?;
            }
            SimOp::Toggle(i, on) if !ids.is_empty() => sim.set_enabled(ids[i % ids.len()], *on).map_err(fail)?,
            SimOp::Remove(i) if !ids.is_empty() => {
                let id = ids.remove(i % ids.len());
                sim.remove_routine(id).map_err(fail)?;
            }
            _ => {}
        }
    }
    Ok(())
}

fn template_and_ops() -> impl Strategy<Value = (HomeTemplate, Vec<SimOp>)> {
    gen::template().prop_flat_map(|t| {
        let ops = gen::sim_ops(&t).prop_map(stamped);
        (Just(t), ops)
    })
}

pub fn event_log_replay(cases: u32) -> Result<(), String> {
    check(cases, template_and_ops(), |(t, ops)| {
        let mut sim = Simulator::new(Arc::new(t));
        drive(&mut sim, &ops)?;
        prop_assert_eq!(&sim.log().replay(sim.initial_state()), sim.state());
        prop_assert!(validate_state(sim.template(), sim.state()).is_empty());
        Ok(())
    })
}

pub fn unchanged_snapshot_quiet(cases: u32) -> Result<(), String> {
    check(cases, template_and_ops(), |(t, ops)| {
        let mut sim = Simulator::new(Arc::new(t));
        drive(&mut sim, &ops)?;
        let Some(last) = sim.last_snapshot().cloned() else { return Ok(()) };
        let fail = |e: homegoal::sim::SimError| TestCaseError::fail(e.to_string());
        // Routines installed or re-enabled since the last tick may fire once here.
        sim.tick(last.at(sim.clock() + 1)).map_err(fail)?;
        let before = sim.state().clone();
        let result = sim.tick(last.at(sim.clock() + 1)).map_err(fail)?;
        prop_assert!(result.fired.is_empty(), "fired {:?}", result.fired);
        prop_assert_eq!(sim.state(), &before);
        Ok(())
    })
}

pub fn tick_matches_oracle(cases: u32) -> Result<(), String> {
    let template = homegoal::home::builtin_home(homegoal::home::BuiltinHomeId::H3);
    check(cases, oracle::instance(), move |instance| {
        oracle::check(&template, &instance).map_err(TestCaseError::fail)
    })
}

fn template_subset_plan() -> impl Strategy<Value = (HomeTemplate, Vec<(String, String)>, ActionPlan)> {
    gen::template().prop_flat_map(|t| {
        let pairs = gen::device_pairs(&t);
        let n = pairs.len();
        let subset = prop::sample::subsequence(pairs, 1..=n);
        let plan = gen::plan(&t);
        (Just(t), subset, plan)
    })
}

pub fn subset_monotonicity(cases: u32) -> Result<(), String> {
    let rt = runtime();
    check(cases, template_subset_plan(), |(t, subset, plan)| {
        let goal = plan.goal_type();
        let plan_kind = match goal {
            GoalType::Immediate => PromptKind::PlanImmediate,
            GoalType::Persistent => PromptKind::PlanPersistent,
        };
        let rules = vec![
            FixtureRule::new(PromptKind::Clarify, "*", None, "RELEVANT: true"),
            FixtureRule::new(PromptKind::FilterDevices, "*", None, gen::subset_doc(&subset).to_string()),
            FixtureRule::new(PromptKind::FilterSensors, "*", None, t.sensors_value().to_string()),
            FixtureRule::new(plan_kind, "*", None, plan.to_json_string()),
        ];
        let chain = Chain::new(
            Arc::new(Gateway::scripted(ScriptedFixture::strict(rules))),
            ChainConfig { mode: ChainMode::FullSplit, ..Default::default() },
        );
        let trace = rt.block_on(chain.run(&t, "do the thing", Some(goal), &[], &CancellationToken::new()));
        prop_assert!(subset_monotone(&t, &trace), "{:?}", trace);
        let inside = plan.touched_devices().iter().all(|(r, d)| subset.iter().any(|(sr, sd)| sr == r && sd == d));
        if inside {
            prop_assert_eq!(trace.outcome, ChainOutcome::PlanProposed, "{:?}", trace.error);
            prop_assert_eq!(trace.parsed_plan.as_ref(), Some(&plan));
        } else {
            prop_assert_eq!(trace.outcome, ChainOutcome::Error);
            prop_assert!(trace.parsed_plan.is_none());
        }
        Ok(())
    })
}

fn mode() -> impl Strategy<Value = ChainMode> {
    prop::sample::select(ChainMode::ALL.to_vec())
}

/// Rules that decline at the relevance step, followed by rules that would
/// yield a plan if the chain went on regardless.
fn declining_rules(plan: &ActionPlan, template: &HomeTemplate, reply: &str) -> Vec<FixtureRule> {
    let declined = format!("RELEVANT: false\n{reply}");
    let immediate_decline = json!({ "explanation": reply }).to_string();
    let persistent_decline = json!({ "trigger": {}, "action": {}, "explanation": reply }).to_string();
    let mut rules = vec![
        FixtureRule::new(PromptKind::Clarify, "*", None, declined.clone()),
        FixtureRule::new(PromptKind::ClarifyFilter, "*", None, declined),
        FixtureRule::new(PromptKind::BaselineImmediate, "*", None, immediate_decline),
        FixtureRule::new(PromptKind::BaselinePersistent, "*", None, persistent_decline),
    ];
    let plan_text = plan.to_json_string();
    for kind in [
        PromptKind::PlanImmediate,
        PromptKind::PlanPersistent,
        PromptKind::FilterPlanImmediate,
        PromptKind::FilterPlanPersistent,
    ] {
        rules.push(FixtureRule::new(kind, "*", None, plan_text.clone()));
    }
    rules.push(FixtureRule::new(PromptKind::FilterDevices, "*", None, template.devices_value().to_string()));
    rules.push(FixtureRule::new(PromptKind::FilterSensors, "*", None, template.sensors_value().to_string()));
    rules
}

pub fn no_relevance_safety(cases: u32) -> Result<(), String> {
    let rt = runtime();
    let command = "[a-z]{1,8}( [a-z]{1,8}){0,4}";
    let reply = "[A-Za-z ,.?]{0,40}";
    let strategy = (gen::template_and_plan(), mode(), command, reply);
    check(cases, strategy, |((t, plan), mode, command, reply)| {
        let goal = plan.goal_type();
        let rules = declining_rules(&plan, &t, &reply);
        let chain = Chain::new(
            Arc::new(Gateway::scripted(ScriptedFixture::strict(rules))),
            ChainConfig { mode, ..Default::default() },
        );
        let template = Arc::new(t);
        let mut session = SessionState::new("prop", template.clone());
        let mut sim = Simulator::new(template);
        let initial = sim.state().clone();
        let cancel = CancellationToken::new();
        let result = rt.block_on(session.post_message(&chain, &command, Some(goal), &cancel));
        if let Some(id) = result.plan_id {
            // Only reached on a violation; execute as a client would so the state check sees it.
            if let Ok((fb, _)) = rt.block_on(session.resolve(&chain, id, &Verdict::Accept, &cancel)) {
                if let Some(accepted) = fb.accepted {
                    let _ = match accepted.goal_type() {
                        GoalType::Immediate => sim.apply_plan(&accepted).map(|_| ()),
                        GoalType::Persistent => sim.install_routine(&accepted).map(|_| ()),
                    };
                }
            }
        }
        prop_assert_eq!(result.trace.outcome, ChainOutcome::NoRelevantDevices, "{:?}", result.trace);
        prop_assert!(result.plan_id.is_none());
        prop_assert!(result.trace.plan.is_none());
        prop_assert!(session.pending.is_none());
        prop_assert_eq!(sim.state(), &initial);
        prop_assert_eq!(sim.routines().count(), 0);
        Ok(())
    })
}

pub fn cost_linearity(cases: u32) -> Result<(), String> {
    let rate = 0.0f64..1.0;
    let strategy = (0u64..10_000_000, 0u64..10_000_000, rate.clone(), rate);
    check(cases, strategy, |(input, output, rin, rout)| {
        let rates = CostRates { input_per_1k: rin, output_per_1k: rout };
        let expected = input as f64 / 1000.0 * rin + output as f64 / 1000.0 * rout;
        let actual = estimate_cost(input, output, &rates);
        prop_assert!((actual - expected).abs() <= 1e-9 * expected.max(1.0), "{actual} vs {expected}");
        let split = estimate_cost(input, 0, &rates) + estimate_cost(0, output, &rates);
        prop_assert!((actual - split).abs() <= 1e-9 * actual.max(1.0));
        Ok(())
    })
}
