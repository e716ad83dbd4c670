//! Proptest strategies for templates, states, plans and sensor timelines.

use proptest::prelude::*;
use proptest::sample::subsequence;
use serde_json::{json, Map, Value};

use homegoal::home::{DeviceState, HomeTemplate, Rgb, SettingPath, SettingType, SettingValue, TimeOfDay};
use homegoal::plan::{ActionPlan, SensorPath, Trigger};
use homegoal::sim::SensorSnapshot;

const ROOMS: &[&str] = &["entry", "livingroom", "kitchen", "bedroom", "den", "attic", "porch"];
const DEVICES: &[&str] =
    &["lamp", "overhead_light", "thermostat", "speaker", "tv", "fan", "coffee_maker", "smart_lock", "blinds"];
const SETTINGS: &[&str] = &["state", "brightness", "color", "volume", "temperature", "mode", "level", "wake_at"];
const GLOBAL_SENSORS: &[&str] = &["local_time", "weather", "outdoor_temp"];
const ROOM_SENSORS: &[&str] = &["motion", "luminosity", "occupancy", "humidity"];

pub fn setting_type() -> impl Strategy<Value = SettingType> {
    prop_oneof![
        Just(SettingType::Boolean),
        Just(SettingType::Float),
        Just(SettingType::Integer),
        Just(SettingType::String),
        Just(SettingType::TimeOfDay),
        Just(SettingType::ColorRgb),
    ]
}

fn named_types(pool: &'static [&'static str], min: usize) -> impl Strategy<Value = Vec<(String, SettingType)>> {
    subsequence(pool, min..=pool.len().min(4))
        .prop_flat_map(|names| {
            let n = names.len();
            (Just(names), prop::collection::vec(setting_type(), n))
        })
        .prop_map(|(names, types)| names.into_iter().map(str::to_string).zip(types).collect())
}

fn type_doc(entries: &[(String, SettingType)]) -> Value {
    Value::Object(entries.iter().map(|(n, t)| (n.clone(), t.to_json())).collect())
}

/// Devices and sensors documents for a valid template with at least one
/// global sensor.
pub fn template_docs() -> impl Strategy<Value = (Value, Value)> {
    subsequence(ROOMS, 1..=4).prop_flat_map(|rooms| {
        let n = rooms.len();
        let devices = prop::collection::vec(
            subsequence(DEVICES, 1..=3).prop_flat_map(|devices| {
                let n = devices.len();
                (Just(devices), prop::collection::vec(named_types(SETTINGS, 1), n))
            }),
            n,
        );
        let room_sensors = prop::collection::vec(prop::option::of(named_types(ROOM_SENSORS, 1)), n);
        (Just(rooms), devices, named_types(GLOBAL_SENSORS, 1), room_sensors).prop_map(
            |(rooms, devices, global, room_sensors)| {
                let mut devices_doc = Map::new();
                let mut sensors_doc = Map::new();
                sensors_doc.insert("global".into(), type_doc(&global));
                for ((room, (names, settings)), sensors) in rooms.iter().zip(devices).zip(room_sensors) {
                    let room_doc: Map<String, Value> =
                        names.iter().zip(&settings).map(|(d, s)| (d.to_string(), type_doc(s))).collect();
                    devices_doc.insert(room.to_string(), Value::Object(room_doc));
                    if let Some(sensors) = sensors {
                        sensors_doc.insert(room.to_string(), type_doc(&sensors));
                    }
                }
                (Value::Object(devices_doc), Value::Object(sensors_doc))
            },
        )
    })
}

pub fn template() -> impl Strategy<Value = HomeTemplate> {
    template_docs().prop_map(|(d, s)| HomeTemplate::from_values(&d, &s).expect("generated template is valid"))
}

/// Any value of `ty`, across the whole domain.
pub fn value(ty: SettingType) -> BoxedStrategy<SettingValue> {
    match ty {
        SettingType::Boolean => any::<bool>().prop_map(SettingValue::Bool).boxed(),
        SettingType::Float => prop_oneof![-1.0e9f64..1.0e9, Just(0.0), Just(1.0), Just(-0.5)]
            .prop_map(SettingValue::Float)
            .boxed(),
        SettingType::Integer => any::<i64>().prop_map(SettingValue::Int).boxed(),
        SettingType::String => "\\PC{0,12}".prop_map(SettingValue::Str).boxed(),
        SettingType::TimeOfDay => (0u16..24, 0u16..60)
            .prop_map(|(h, m)| SettingValue::Time(TimeOfDay::from_hm(h, m).unwrap()))
            .boxed(),
        SettingType::ColorRgb => any::<(u8, u8, u8)>().prop_map(|(r, g, b)| SettingValue::Color(Rgb::new(r, g, b))).boxed(),
    }
}

/// Values from a few points per type, so triggers and readings coincide often.
pub fn narrow_value(ty: SettingType) -> BoxedStrategy<SettingValue> {
    match ty {
        SettingType::Boolean => any::<bool>().prop_map(SettingValue::Bool).boxed(),
        SettingType::Float => prop::sample::select(vec![0.0, 0.5, 1.0]).prop_map(SettingValue::Float).boxed(),
        SettingType::Integer => (0i64..3).prop_map(SettingValue::Int).boxed(),
        SettingType::String => prop::sample::select(vec!["rain", "clear", "Light Rain"])
            .prop_map(|s| SettingValue::Str(s.to_string()))
            .boxed(),
        SettingType::TimeOfDay => prop::sample::select(vec![419u16, 420, 421])
            .prop_map(|m| SettingValue::Time(TimeOfDay::from_hm(m / 60, m % 60).unwrap()))
            .boxed(),
        SettingType::ColorRgb => prop::sample::select(vec![Rgb::WHITE, Rgb::new(255, 0, 0)])
            .prop_map(SettingValue::Color)
            .boxed(),
    }
}

fn setting_paths(template: &HomeTemplate) -> Vec<(SettingPath, SettingType)> {
    template
        .devices()
        .flat_map(|(room, device, spec)| {
            spec.settings.iter().map(move |(s, t)| (SettingPath::new(room, device, s), *t))
        })
        .collect()
}

fn sensor_paths(template: &HomeTemplate) -> Vec<(SensorPath, SettingType)> {
    template.sensors.iter().map(|(scope, name, t)| (SensorPath::new(scope, name), t)).collect()
}

/// A total state over `template`.
pub fn full_state(template: &HomeTemplate) -> impl Strategy<Value = DeviceState> {
    let paths = setting_paths(template);
    let values: Vec<_> = paths.iter().map(|(_, t)| value(*t)).collect();
    values.prop_map(move |values| {
        let mut state = DeviceState::default();
        for ((path, _), v) in paths.iter().zip(values) {
            state.set(path.clone(), v);
        }
        state
    })
}

/// A non-empty partial assignment over `template`.
pub fn assignments(template: &HomeTemplate, narrow: bool) -> impl Strategy<Value = DeviceState> {
    let paths = setting_paths(template);
    let n = paths.len();
    subsequence(paths, 1..=n.min(5)).prop_flat_map(move |chosen| {
        let values: Vec<_> =
            chosen.iter().map(|(_, t)| if narrow { narrow_value(*t) } else { value(*t) }).collect();
        (Just(chosen), values).prop_map(|(chosen, values)| {
            let mut state = DeviceState::default();
            for ((path, _), v) in chosen.into_iter().zip(values) {
                state.set(path, v);
            }
            state
        })
    })
}

pub fn trigger(template: &HomeTemplate, narrow: bool) -> impl Strategy<Value = Trigger> {
    let paths = sensor_paths(template);
    let n = paths.len();
    subsequence(paths, 1..=n.min(3)).prop_flat_map(move |chosen| {
        let values: Vec<_> =
            chosen.iter().map(|(_, t)| if narrow { narrow_value(*t) } else { value(*t) }).collect();
        (Just(chosen), values).prop_map(|(chosen, values)| Trigger {
            conditions: chosen.into_iter().map(|(p, _)| p).zip(values).collect(),
        })
    })
}

pub fn explanation() -> impl Strategy<Value = String> {
    "[A-Za-z ,.'!]{0,40}"
}

pub fn immediate_plan(template: &HomeTemplate) -> impl Strategy<Value = ActionPlan> {
    (assignments(template, false), explanation())
        .prop_map(|(assignments, explanation)| ActionPlan::Immediate { assignments, explanation })
}

pub fn routine_plan(template: &HomeTemplate, narrow: bool) -> impl Strategy<Value = ActionPlan> {
    (trigger(template, narrow), assignments(template, narrow), explanation())
        .prop_map(|(trigger, action, explanation)| ActionPlan::Routine { trigger, action, explanation })
}

pub fn plan(template: &HomeTemplate) -> BoxedStrategy<ActionPlan> {
    prop_oneof![immediate_plan(template), routine_plan(template, false)].boxed()
}

pub fn template_and_plan() -> impl Strategy<Value = (HomeTemplate, ActionPlan)> {
    template().prop_flat_map(|t| {
        let p = plan(&t);
        (Just(t), p)
    })
}

/// Every sensor of `template` with a narrow reading.
pub fn snapshot(template: &HomeTemplate, timestamp: i64) -> impl Strategy<Value = SensorSnapshot> {
    let paths = sensor_paths(template);
    let template = template.clone();
    let values: Vec<_> = paths.iter().map(|(_, t)| narrow_value(*t)).collect();
    values.prop_map(move |values| {
        let values = paths.iter().map(|(p, _)| p.clone()).zip(values).collect();
        SensorSnapshot::new(&template, timestamp, values).expect("generated snapshot is total")
    })
}

/// One simulator operation. Routine ids are resolved modulo the installed count.
#[derive(Debug, Clone)]
pub enum SimOp {
    Apply(ActionPlan),
    Install(ActionPlan),
    Tick(SensorSnapshot),
    Toggle(usize, bool),
    Remove(usize),
}

pub fn sim_ops(template: &HomeTemplate) -> impl Strategy<Value = Vec<SimOp>> {
    let op = prop_oneof![
        3 => immediate_plan(template).prop_map(SimOp::Apply),
        2 => routine_plan(template, true).prop_map(SimOp::Install),
        4 => snapshot(template, 0).prop_map(SimOp::Tick),
        1 => (0usize..8, any::<bool>()).prop_map(|(i, on)| SimOp::Toggle(i, on)),
        1 => (0usize..8).prop_map(SimOp::Remove),
    ];
    prop::collection::vec(op, 1..24)
}

/// A template-shaped subset document naming `devices`, settings left empty.
pub fn subset_doc(devices: &[(String, String)]) -> Value {
    let mut doc = Map::new();
    for (room, device) in devices {
        doc.entry(room.clone())
            .or_insert_with(|| json!({}))
            .as_object_mut()
            .unwrap()
            .insert(device.clone(), json!({}));
    }
    Value::Object(doc)
}

pub fn device_pairs(template: &HomeTemplate) -> Vec<(String, String)> {
    template.devices().map(|(r, d, _)| (r.to_string(), d.to_string())).collect()
}
