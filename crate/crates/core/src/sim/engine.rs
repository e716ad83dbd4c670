use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use serde_json::Value;

use crate::home::{DeviceState, HomeTemplate, SettingType, SettingValue};
use crate::plan::{ActionPlan, Trigger};

use super::adapter::{DeviceAdapter, DeviceSelector};
use super::log::{EventLog, LoggedEvent, PlanSource, SimEvent};
use super::snapshot::SensorSnapshot;
use super::SimError;

/// Tolerance for float sensor equality.
pub const FLOAT_TOLERANCE: f64 = 1e-6;

/// Whether a reading satisfies one trigger condition.
///
/// Times compare at minute resolution, floats within [`FLOAT_TOLERANCE`],
/// strings by case-insensitive substring. Mismatched types never match.
pub fn condition_matches(expected: &SettingValue, actual: &SettingValue) -> bool {
    match (expected, actual) {
        (SettingValue::Time(e), SettingValue::Time(a)) => e.minutes() == a.minutes(),
        (SettingValue::Float(e), SettingValue::Float(a)) => (e - a).abs() <= FLOAT_TOLERANCE,
        (SettingValue::Str(e), SettingValue::Str(a)) => a.to_lowercase().contains(&e.to_lowercase()),
        (e, a) => e == a,
    }
}

/// Conjunction over every condition. A missing reading is false.
pub fn trigger_matches(trigger: &Trigger, snapshot: &SensorSnapshot) -> bool {
    trigger
        .conditions
        .iter()
        .all(|(path, expected)| snapshot.get(path).is_some_and(|actual| condition_matches(expected, actual)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstalledRoutine {
    pub id: u64,
    #[serde(serialize_with = "ser_trigger")]
    pub trigger: Trigger,
    #[serde(serialize_with = "ser_state")]
    pub action: DeviceState,
    pub explanation: String,
    pub enabled: bool,
    /// Predicate value at the latest snapshot, tracked while disabled too.
    pub last_state: bool,
    /// Has a string condition, matched by substring.
    pub approximate: bool,
    pub fire_count: u64,
    pub last_fired: Option<i64>,
    /// Always `"edge"`: fires on a false to true transition.
    pub semantics: &'static str,
}

fn ser_trigger<S: serde::Serializer>(t: &Trigger, s: S) -> Result<S::Ok, S::Error> {
    t.to_json().serialize(s)
}

fn ser_state<S: serde::Serializer>(d: &DeviceState, s: S) -> Result<S::Ok, S::Error> {
    d.to_json().serialize(s)
}

impl InstalledRoutine {
    pub fn plan(&self) -> ActionPlan {
        ActionPlan::Routine {
            trigger: self.trigger.clone(),
            action: self.action.clone(),
            explanation: self.explanation.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Installation {
    pub routine_id: u64,
    /// The same trigger and action were already installed under this id.
    pub duplicate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TickResult {
    pub fired: Vec<u64>,
    pub events: Vec<LoggedEvent>,
}

struct Binding {
    selector: DeviceSelector,
    adapter: Arc<dyn DeviceAdapter>,
}

/// Live device state, installed routines and the event log for one home.
///
/// Not synchronized; share it through [`super::SimHandle`].
pub struct Simulator {
    template: Arc<HomeTemplate>,
    initial: DeviceState,
    state: DeviceState,
    routines: BTreeMap<u64, InstalledRoutine>,
    next_routine_id: u64,
    log: EventLog,
    clock: i64,
    last_snapshot: Option<SensorSnapshot>,
    bindings: Vec<Binding>,
    desynced: BTreeSet<(String, String)>,
}

impl Simulator {
    pub fn new(template: Arc<HomeTemplate>) -> Self {
        let initial = DeviceState::initial(&template);
        Simulator::with_state(template, initial)
    }

    /// `state` must be complete for the template.
    pub fn with_state(template: Arc<HomeTemplate>, state: DeviceState) -> Self {
        Simulator {
            template,
            initial: state.clone(),
            state,
            routines: BTreeMap::new(),
            next_routine_id: 1,
            log: EventLog::default(),
            clock: 0,
            last_snapshot: None,
            bindings: Vec::new(),
            desynced: BTreeSet::new(),
        }
    }

    pub fn template(&self) -> &Arc<HomeTemplate> {
        &self.template
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    pub fn initial_state(&self) -> &DeviceState {
        &self.initial
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Timestamp of the latest snapshot, or 0 before the first tick.
    pub fn clock(&self) -> i64 {
        self.clock
    }

    pub fn last_snapshot(&self) -> Option<&SensorSnapshot> {
        self.last_snapshot.as_ref()
    }

    pub fn routines(&self) -> impl Iterator<Item = &InstalledRoutine> {
        self.routines.values()
    }

    pub fn routine(&self, id: u64) -> Option<&InstalledRoutine> {
        self.routines.get(&id)
    }

    pub fn desynced(&self) -> Vec<(String, String)> {
        self.desynced.iter().cloned().collect()
    }

    /// Applies an immediate plan.
    pub fn apply_plan(&mut self, plan: &ActionPlan) -> Result<Vec<LoggedEvent>, SimError> {
        match plan {
            ActionPlan::Immediate { assignments, .. } => {
                self.check_assignments(assignments)?;
                let start = self.log.len();
                self.apply_assignments(PlanSource::User, assignments);
                Ok(self.log.entries()[start..].to_vec())
            }
            ActionPlan::Routine { .. } => Err(SimError::NotImmediate),
        }
    }

    fn check_assignments(&self, assignments: &DeviceState) -> Result<(), SimError> {
        for (path, value) in assignments.iter() {
            match self.template.setting_type(&path.room, &path.device, &path.setting) {
                Some(ty) if ty == value.setting_type() => {}
                Some(ty) => {
                    return Err(SimError::InvalidPlan(format!("{path} expects {ty}, got {}", value.setting_type())))
                }
                None => return Err(SimError::InvalidPlan(format!("unknown setting {path}"))),
            }
        }
        Ok(())
    }

    fn apply_assignments(&mut self, source: PlanSource, assignments: &DeviceState) {
        self.log.append(self.clock, SimEvent::PlanApplied { source, assignments: assignments.len() });
        let mut touched = BTreeSet::new();
        for (path, after) in assignments.iter() {
            let before = self.state.set(path.clone(), after.clone()).expect("assignment targets a known setting");
            self.log.append(
                self.clock,
                SimEvent::SettingChanged { path: path.clone(), before, after: after.clone() },
            );
            touched.insert((path.room.clone(), path.device.clone()));
        }
        for (room, device) in touched {
            let changed: Vec<_> = assignments
                .iter()
                .filter(|(p, _)| p.room == room && p.device == device)
                .map(|(p, v)| (p.setting.clone(), v.clone()))
                .collect();
            self.forward(&room, &device, &changed);
        }
    }

    /// Installs a routine plan, enabled. Re-installing an identical trigger
    /// and action returns the existing id.
    pub fn install_routine(&mut self, plan: &ActionPlan) -> Result<Installation, SimError> {
        let ActionPlan::Routine { trigger, action, explanation } = plan else {
            return Err(SimError::NotRoutine);
        };
        if trigger.is_empty() || action.is_empty() {
            return Err(SimError::InvalidPlan("routine needs a trigger and an action".into()));
        }
        self.check_assignments(action)?;
        for (path, value) in &trigger.conditions {
            match self.template.sensors.get(&path.scope, &path.name) {
                Some(ty) if ty == value.setting_type() => {}
                _ => return Err(SimError::UnknownSensor(path.to_string())),
            }
        }
        if let Some(existing) = self.routines.values().find(|r| &r.trigger == trigger && &r.action == action) {
            tracing::warn!(routine_id = existing.id, "duplicate routine install");
            return Ok(Installation { routine_id: existing.id, duplicate: true });
        }
        let id = self.next_routine_id;
        self.next_routine_id += 1;
        let approximate = trigger
            .conditions
            .keys()
            .any(|p| self.template.sensors.get(&p.scope, &p.name) == Some(SettingType::String));
        self.routines.insert(
            id,
            InstalledRoutine {
                id,
                trigger: trigger.clone(),
                action: action.clone(),
                explanation: explanation.clone(),
                enabled: true,
                last_state: false,
                approximate,
                fire_count: 0,
                last_fired: None,
                semantics: "edge",
            },
        );
        self.log.append(self.clock, SimEvent::RoutineInstalled { routine_id: id });
        Ok(Installation { routine_id: id, duplicate: false })
    }

    pub fn set_enabled(&mut self, id: u64, enabled: bool) -> Result<(), SimError> {
        let routine = self.routines.get_mut(&id).ok_or(SimError::UnknownRoutine(id))?;
        if routine.enabled != enabled {
            routine.enabled = enabled;
            self.log.append(self.clock, SimEvent::RoutineToggled { routine_id: id, enabled });
        }
        Ok(())
    }

    pub fn remove_routine(&mut self, id: u64) -> Result<InstalledRoutine, SimError> {
        let routine = self.routines.remove(&id).ok_or(SimError::UnknownRoutine(id))?;
        self.log.append(self.clock, SimEvent::RoutineRemoved { routine_id: id });
        Ok(routine)
    }

    /// Advances to `snapshot` and fires every enabled routine whose trigger
    /// became true, in id order.
    pub fn tick(&mut self, snapshot: SensorSnapshot) -> Result<TickResult, SimError> {
        if self.last_snapshot.is_some() && snapshot.timestamp <= self.clock {
            return Err(SimError::NonMonotonic { previous: self.clock, next: snapshot.timestamp });
        }
        let snapshot = SensorSnapshot::new(&self.template, snapshot.timestamp, snapshot.values)?;
        self.clock = snapshot.timestamp;
        let start = self.log.len();
        let mut fired = Vec::new();
        for routine in self.routines.values_mut() {
            let now = trigger_matches(&routine.trigger, &snapshot);
            if now && !routine.last_state && routine.enabled {
                routine.fire_count += 1;
                routine.last_fired = Some(snapshot.timestamp);
                fired.push(routine.id);
            }
            routine.last_state = now;
        }
        for id in &fired {
            let (action, approximate) = {
                let r = &self.routines[id];
                (r.action.clone(), r.approximate)
            };
            if approximate {
                tracing::info!(routine_id = id, "routine fired on an approximate string match");
            }
            self.log.append(self.clock, SimEvent::RoutineFired { routine_id: *id, approximate });
            self.apply_assignments(PlanSource::Routine { routine_id: *id }, &action);
        }
        self.last_snapshot = Some(snapshot);
        Ok(TickResult { fired, events: self.log.entries()[start..].to_vec() })
    }

    /// Binds an adapter and pushes the current settings of matching devices.
    pub fn bind_adapter(&mut self, selector: DeviceSelector, adapter: Arc<dyn DeviceAdapter>) -> Result<usize, SimError> {
        let devices: Vec<(String, String)> = self
            .template
            .devices()
            .filter(|(room, device, _)| selector.matches(room, device))
            .map(|(room, device, _)| (room.to_string(), device.to_string()))
            .collect();
        if devices.is_empty() {
            return Err(SimError::UnknownDevice(selector.device));
        }
        self.bindings.push(Binding { selector, adapter });
        for (room, device) in &devices {
            self.resync(room, device);
        }
        Ok(devices.len())
    }

    /// Pushes full device state to every desynced device; returns those
    /// still desynced.
    pub fn retry_desynced(&mut self) -> Vec<(String, String)> {
        for (room, device) in self.desynced() {
            self.resync(&room, &device);
        }
        self.desynced()
    }

    /// Reads a bound device back through its adapter.
    pub fn read_adapter(&self, room: &str, device: &str) -> Option<Result<BTreeMap<String, Value>, super::AdapterError>> {
        self.bindings
            .iter()
            .find(|b| b.selector.matches(room, device))
            .map(|b| b.adapter.read_state(room, device))
    }

    fn device_settings(&self, room: &str, device: &str) -> Vec<(String, SettingValue)> {
        self.state
            .iter()
            .filter(|(p, _)| p.room == room && p.device == device)
            .map(|(p, v)| (p.setting.clone(), v.clone()))
            .collect()
    }

    fn forward(&mut self, room: &str, device: &str, changed: &[(String, SettingValue)]) {
        if self.desynced.contains(&(room.to_string(), device.to_string())) {
            self.resync(room, device);
        } else {
            self.push(room, device, changed);
        }
    }

    fn resync(&mut self, room: &str, device: &str) {
        let settings = self.device_settings(room, device);
        self.push(room, device, &settings);
    }

    fn push(&mut self, room: &str, device: &str, settings: &[(String, SettingValue)]) {
        let adapters: Vec<Arc<dyn DeviceAdapter>> = self
            .bindings
            .iter()
            .filter(|b| b.selector.matches(room, device))
            .map(|b| b.adapter.clone())
            .collect();
        if adapters.is_empty() {
            return;
        }
        let result = adapters.iter().try_for_each(|adapter| {
            settings.iter().try_for_each(|(setting, value)| adapter.set_setting(room, device, setting, value))
        });
        let key = (room.to_string(), device.to_string());
        match result {
            Ok(()) => {
                if self.desynced.remove(&key) {
                    self.log.append(
                        self.clock,
                        SimEvent::AdapterResynced { room: room.to_string(), device: device.to_string() },
                    );
                }
            }
            Err(e) => {
                tracing::warn!(room, device, error = %e, "adapter write failed; device marked desynced");
                self.desynced.insert(key);
                self.log.append(
                    self.clock,
                    SimEvent::AdapterDesynced { room: room.to_string(), device: device.to_string(), error: e.to_string() },
                );
            }
        }
    }
}
