//! Brute-force routine replay, independent of the engine.
//!
//! Instances are described in plain data. The oracle evaluates every routine
//! predicate at every snapshot and fires where the truth value goes from
//! false (or "never evaluated") to true while the routine is enabled. The
//! engine is driven through the public plan and snapshot JSON.

use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::{json, Map, Value};

use homegoal::home::HomeTemplate;
use homegoal::plan::{parse_plan, GoalType};
use homegoal::sim::{parse_sensor_values, SensorSnapshot, Simulator};

/// A sensor reading or a trigger condition value.
#[derive(Debug, Clone, PartialEq)]
pub enum Reading {
    Flag(bool),
    Count(i64),
    Level(f64),
    Text(String),
    /// Hour, minute, second. Conditions carry second 0.
    Clock(u8, u8, u8),
}

/// Sensors of the instance home, with the kind of reading each produces.
pub const SENSORS: &[(&str, &str, &str)] = &[
    ("global", "local_time", "clock"),
    ("global", "weather", "text"),
    ("entry", "motion", "flag"),
    ("entry", "luminosity", "level"),
    ("entry", "front_door_temperature", "count"),
    ("livingroom", "motion", "flag"),
    ("livingroom", "luminosity", "level"),
    ("kitchen", "motion", "flag"),
    ("kitchen", "luminosity", "level"),
    ("bathroom", "motion", "flag"),
    ("bathroom", "luminosity", "level"),
    ("bedroom", "motion", "flag"),
    ("bedroom", "luminosity", "level"),
];

/// Candidate routine actions: `(room, device, setting, value)`.
pub const ACTIONS: &[(&str, &str, &str, i64)] = &[
    ("livingroom", "lamp", "state", 1),
    ("bedroom", "blinds", "position", 100),
    ("kitchen", "coffee_maker", "state", 1),
    ("entry", "smart_lock", "locked", 1),
];

#[derive(Debug, Clone)]
pub struct Routine {
    /// Indices into [`SENSORS`], with the expected reading.
    pub conditions: Vec<(usize, Reading)>,
    pub action: usize,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub timestamp: i64,
    /// Indexed like [`SENSORS`].
    pub readings: Vec<Reading>,
    /// `(routine index, enabled)` applied before this snapshot.
    pub toggles: Vec<(usize, bool)>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub routines: Vec<Routine>,
    pub steps: Vec<Step>,
}

fn condition_holds(expected: &Reading, actual: &Reading) -> bool {
    match (expected, actual) {
        (Reading::Flag(a), Reading::Flag(b)) => a == b,
        (Reading::Count(a), Reading::Count(b)) => a == b,
        (Reading::Level(a), Reading::Level(b)) => (a - b).abs() <= 1e-6,
        (Reading::Text(a), Reading::Text(b)) => b.to_lowercase().contains(&a.to_lowercase()),
        (Reading::Clock(h1, m1, _), Reading::Clock(h2, m2, _)) => h1 == h2 && m1 == m2,
        _ => false,
    }
}

/// Routines with the same conditions and action collapse into the first.
fn canonical_ids(routines: &[Routine]) -> Vec<u64> {
    let key = |r: &Routine| {
        let mut conds: Vec<String> = r
            .conditions
            .iter()
            .map(|(i, v)| match v {
                Reading::Clock(h, m, _) => format!("{i}=clock{h}:{m}"),
                other => format!("{i}={other:?}"),
            })
            .collect();
        conds.sort();
        format!("{}|{}", conds.join(","), r.action)
    };
    let mut seen: Vec<(String, u64)> = Vec::new();
    routines
        .iter()
        .map(|r| {
            let k = key(r);
            match seen.iter().find(|(s, _)| *s == k) {
                Some((_, id)) => *id,
                None => {
                    let id = seen.len() as u64 + 1;
                    seen.push((k, id));
                    id
                }
            }
        })
        .collect()
}

/// Fired routine ids per step, ascending.
pub fn oracle(instance: &Instance) -> Vec<Vec<u64>> {
    let ids = canonical_ids(&instance.routines);
    let distinct = ids.iter().copied().max().unwrap_or(0) as usize;
    let mut enabled = vec![true; distinct + 1];
    let mut history: Vec<Vec<bool>> = vec![Vec::new(); distinct + 1];
    let mut out = Vec::new();
    for step in &instance.steps {
        for &(index, on) in &step.toggles {
            enabled[ids[index] as usize] = on;
        }
        let mut fired = Vec::new();
        for id in 1..=distinct {
            let routine = &instance.routines[ids.iter().position(|&x| x as usize == id).unwrap()];
            let now = routine.conditions.iter().all(|(i, v)| condition_holds(v, &step.readings[*i]));
            let before = history[id].last().copied().unwrap_or(false);
            if now && !before && enabled[id] {
                fired.push(id as u64);
            }
            history[id].push(now);
        }
        out.push(fired);
    }
    out
}

fn reading_json(reading: &Reading, as_condition: bool, style: usize) -> Value {
    match reading {
        Reading::Flag(b) => json!(b),
        Reading::Count(n) => json!(n),
        Reading::Level(f) => json!(f),
        Reading::Text(s) => json!(s),
        Reading::Clock(h, m, s) if as_condition => {
            let (h12, suffix) = match h {
                0 => (12, "am"),
                1..=11 => (*h, "am"),
                12 => (12, "pm"),
                _ => (h - 12, "pm"),
            };
            match style % 3 {
                0 => json!(format!("{h12}:{m:02}{suffix}")),
                1 => json!(format!("{h:02}:{m:02}")),
                _ => json!(format!("{h12}:{m:02} {}", suffix.to_uppercase())),
            }
        }
        Reading::Clock(h, m, s) => json!(format!("{h:02}:{m:02}:{s:02}")),
    }
}

fn nested(entries: impl IntoIterator<Item = (String, String, Value)>) -> Value {
    let mut doc = Map::new();
    for (outer, inner, v) in entries {
        doc.entry(outer).or_insert_with(|| json!({})).as_object_mut().unwrap().insert(inner, v);
    }
    Value::Object(doc)
}

pub fn routine_json(routine: &Routine, style: usize) -> Value {
    let trigger = nested(routine.conditions.iter().map(|(i, v)| {
        let (scope, name, _) = SENSORS[*i];
        (scope.to_string(), name.to_string(), reading_json(v, true, style))
    }));
    let (room, device, setting, value) = ACTIONS[routine.action];
    let value = if setting == "position" { json!(value) } else { json!(value == 1) };
    json!({
        "trigger": trigger,
        "action": {room: {device: {setting: value}}},
        "explanation": "",
    })
}

pub fn snapshot_json(step: &Step) -> Value {
    nested(step.readings.iter().enumerate().map(|(i, v)| {
        let (scope, name, _) = SENSORS[i];
        (scope.to_string(), name.to_string(), reading_json(v, false, 0))
    }))
}

/// Runs the instance through the engine and returns fired ids per step.
pub fn engine(template: &HomeTemplate, instance: &Instance) -> Result<Vec<Vec<u64>>, String> {
    let mut sim = Simulator::new(std::sync::Arc::new(template.clone()));
    let mut ids = Vec::new();
    for (n, routine) in instance.routines.iter().enumerate() {
        let plan = parse_plan(template, &routine_json(routine, n), GoalType::Persistent).map_err(|e| e.to_string())?;
        ids.push(sim.install_routine(&plan).map_err(|e| e.to_string())?.routine_id);
    }
    let mut out = Vec::new();
    for step in &instance.steps {
        for &(index, on) in &step.toggles {
            sim.set_enabled(ids[index], on).map_err(|e| e.to_string())?;
        }
        let values = parse_sensor_values(template, &snapshot_json(step)).map_err(|e| e.to_string())?;
        let snapshot = SensorSnapshot::new(template, step.timestamp, values).map_err(|e| e.to_string())?;
        out.push(sim.tick(snapshot).map_err(|e| e.to_string())?.fired);
    }
    Ok(out)
}

fn reading_for(kind: &str) -> BoxedStrategy<Reading> {
    match kind {
        "flag" => any::<bool>().prop_map(Reading::Flag).boxed(),
        "count" => (60i64..63).prop_map(Reading::Count).boxed(),
        "level" => prop::sample::select(vec![0.0, 0.25, 0.5]).prop_map(Reading::Level).boxed(),
        "text" => prop::sample::select(vec!["clear", "rain", "Light rain", "snow", "RAIN showers"])
            .prop_map(|s| Reading::Text(s.to_string()))
            .boxed(),
        _ => (prop::sample::select(vec![(6u8, 59u8), (7, 0), (7, 1), (19, 0)]), prop::sample::select(vec![0u8, 30]))
            .prop_map(|((h, m), s)| Reading::Clock(h, m, s))
            .boxed(),
    }
}

fn condition_for(kind: &str) -> BoxedStrategy<Reading> {
    match kind {
        "text" => prop::sample::select(vec!["rain", "clear", "snow"]).prop_map(|s| Reading::Text(s.to_string())).boxed(),
        "clock" => prop::sample::select(vec![(7u8, 0u8), (19, 0), (7, 1)])
            .prop_map(|(h, m)| Reading::Clock(h, m, 0))
            .boxed(),
        other => reading_for(other),
    }
}

fn routine() -> impl Strategy<Value = Routine> {
    let indices: Vec<usize> = (0..SENSORS.len()).collect();
    (prop::sample::subsequence(indices, 1..=3), 0..ACTIONS.len()).prop_flat_map(|(chosen, action)| {
        let values: Vec<_> = chosen.iter().map(|&i| condition_for(SENSORS[i].2)).collect();
        (Just(chosen), values, Just(action)).prop_map(|(chosen, values, action)| Routine {
            conditions: chosen.into_iter().zip(values).collect(),
            action,
        })
    })
}

pub fn instance() -> impl Strategy<Value = Instance> {
    prop::collection::vec(routine(), 1..6).prop_flat_map(|routines| {
        let n = routines.len();
        let readings: Vec<_> = SENSORS.iter().map(|(_, _, k)| reading_for(k)).collect();
        let step = (1i64..120, readings, prop::collection::vec((0..n, any::<bool>()), 0..2));
        (Just(routines), prop::collection::vec(step, 2..14)).prop_map(|(routines, steps)| {
            let mut clock = 0;
            let steps = steps
                .into_iter()
                .map(|(delta, readings, toggles)| {
                    clock += delta;
                    Step { timestamp: clock, readings, toggles }
                })
                .collect();
            Instance { name: "generated".into(), routines, steps }
        })
    })
}

fn quiet_readings(time: Reading, weather: &str) -> Vec<Reading> {
    SENSORS
        .iter()
        .map(|(scope, name, kind)| match (*scope, *name, *kind) {
            (_, "local_time", _) => time.clone(),
            (_, "weather", _) => Reading::Text(weather.to_string()),
            (_, _, "flag") => Reading::Flag(false),
            (_, _, "count") => Reading::Count(60),
            _ => Reading::Level(0.0),
        })
        .collect()
}

/// A 7:00am routine fed 6:59, 7:00, 7:00:30 and 7:01 fires exactly once.
pub fn seven_am_case() -> Instance {
    let routine = Routine { conditions: vec![(0, Reading::Clock(7, 0, 0))], action: 2 };
    let times = [(6, 59, 0), (7, 0, 0), (7, 0, 30), (7, 1, 0)];
    let steps = times
        .iter()
        .enumerate()
        .map(|(i, &(h, m, s))| Step {
            timestamp: 60 * (i as i64 + 1),
            readings: quiet_readings(Reading::Clock(h, m, s), "clear"),
            toggles: Vec::new(),
        })
        .collect();
    Instance { name: "7:00am once".into(), routines: vec![routine], steps }
}

/// A rain routine over clear, light rain, heavy rain fires once, at the
/// first rainy snapshot.
pub fn rain_case() -> Instance {
    let routine = Routine { conditions: vec![(1, Reading::Text("rain".into()))], action: 0 };
    let steps = ["clear", "Light rain", "heavy rain"]
        .iter()
        .enumerate()
        .map(|(i, weather)| Step {
            timestamp: 100 * (i as i64 + 1),
            readings: quiet_readings(Reading::Clock(15, 0, 0), weather),
            toggles: Vec::new(),
        })
        .collect();
    Instance { name: "3-snapshot rain".into(), routines: vec![routine], steps }
}

/// Fixed cases first, then generated instances, deterministically.
pub fn instances(total: usize) -> Vec<Instance> {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let mut runner =
        TestRunner::new_with_rng(Config::default(), TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = instance();
    let mut out = vec![seven_am_case(), rain_case()];
    while out.len() < total {
        let mut generated = strategy.new_tree(&mut runner).expect("instance tree").current();
        generated.name = format!("generated #{}", out.len());
        out.push(generated);
    }
    out
}

/// Per-instance comparison; `Err` names the first mismatch.
pub fn check(template: &HomeTemplate, instance: &Instance) -> Result<(), String> {
    let expected = oracle(instance);
    let actual = engine(template, instance)?;
    if expected == actual {
        return Ok(());
    }
    let step = expected.iter().zip(&actual).position(|(a, b)| a != b).unwrap_or(0);
    Err(format!(
        "{}: step {step} oracle {:?} engine {:?}",
        instance.name,
        expected.get(step),
        actual.get(step)
    ))
}

/// Readings by sensor path, for diagnostics.
#[allow(dead_code)]
pub fn describe(step: &Step) -> BTreeMap<String, String> {
    step.readings
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("{}.{}", SENSORS[i].0, SENSORS[i].1), format!("{r:?}")))
        .collect()
}
