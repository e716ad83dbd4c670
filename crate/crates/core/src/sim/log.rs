//! Append-only simulator event log.

use serde::Serialize;

use crate::home::{DeviceState, SettingPath, SettingValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanSource {
    User,
    Routine { routine_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimEvent {
    /// Followed by one `SettingChanged` per assignment.
    PlanApplied { source: PlanSource, assignments: usize },
    RoutineInstalled { routine_id: u64 },
    RoutineFired { routine_id: u64, approximate: bool },
    SettingChanged { path: SettingPath, before: SettingValue, after: SettingValue },
    RoutineToggled { routine_id: u64, enabled: bool },
    RoutineRemoved { routine_id: u64 },
    AdapterDesynced { room: String, device: String, error: String },
    AdapterResynced { room: String, device: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoggedEvent {
    /// Position in the log, from 0.
    pub seq: u64,
    pub timestamp: i64,
    #[serde(flatten)]
    pub event: SimEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    entries: Vec<LoggedEvent>,
}

impl EventLog {
    pub fn append(&mut self, timestamp: i64, event: SimEvent) -> &LoggedEvent {
        let seq = self.entries.len() as u64;
        self.entries.push(LoggedEvent { seq, timestamp, event });
        self.entries.last().expect("just pushed")
    }

    pub fn entries(&self) -> &[LoggedEvent] {
        &self.entries
    }

    /// Entries with `seq >= cursor`.
    pub fn since(&self, cursor: u64) -> &[LoggedEvent] {
        let start = (cursor as usize).min(self.entries.len());
        &self.entries[start..]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Folds every `SettingChanged` onto `initial`.
    pub fn replay(&self, initial: &DeviceState) -> DeviceState {
        replay_events(self.entries.iter().map(|e| &e.event), initial)
    }

    pub fn to_json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
            .collect()
    }
}

pub fn replay_events<'a>(events: impl IntoIterator<Item = &'a SimEvent>, initial: &DeviceState) -> DeviceState {
    let mut state = initial.clone();
    for event in events {
        if let SimEvent::SettingChanged { path, after, .. } = event {
            state.set(path.clone(), after.clone());
        }
    }
    state
}
