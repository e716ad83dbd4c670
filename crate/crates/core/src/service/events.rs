//! Per-session UI event stream.

use std::sync::Mutex;

use serde::Serialize;
use serde_json::Value;
use tokio::sync::watch;

use crate::chain::{ChainOutcome, StepStatus};
use crate::plan::{PlanDiff, PlannedChange};
use crate::prompt::PromptKind;
use crate::sim::{LoggedEvent, PlanSource, SimEvent};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UiEvent {
    /// Device settings written by an accepted plan or a firing routine.
    StateChanged { source: PlanSource, changes: Vec<PlannedChange> },
    PlanProposed { plan_id: u64, plan: Value, explanation: String, diff: PlanDiff },
    ChainStep { step: PromptKind, attempt: u32, status: StepStatus },
    RoutineFired { routine_id: u64 },
    RoutineInstalled { routine_id: u64, duplicate: bool },
    RoutineRemoved { routine_id: u64 },
    NeedsClarification { utterance: String },
    /// Any other reply: declines after the clarification cap, errors, apologies, acknowledgements.
    Message { outcome: ChainOutcome, utterance: String },
}

impl UiEvent {
    pub fn name(&self) -> &'static str {
        match self {
            UiEvent::StateChanged { .. } => "state_changed",
            UiEvent::PlanProposed { .. } => "plan_proposed",
            UiEvent::ChainStep { .. } => "chain_step",
            UiEvent::RoutineFired { .. } => "routine_fired",
            UiEvent::RoutineInstalled { .. } => "routine_installed",
            UiEvent::RoutineRemoved { .. } => "routine_removed",
            UiEvent::NeedsClarification { .. } => "needs_clarification",
            UiEvent::Message { .. } => "message",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UiEventRecord {
    /// Position in the session stream, from 0.
    pub seq: u64,
    #[serde(flatten)]
    pub event: UiEvent,
}

/// Simulator log entries as UI events, one `StateChanged` per applied plan.
pub fn ui_events_from_log(entries: &[LoggedEvent]) -> Vec<UiEvent> {
    let mut out = Vec::new();
    let mut current: Option<(PlanSource, Vec<PlannedChange>)> = None;
    let flush = |current: &mut Option<(PlanSource, Vec<PlannedChange>)>, out: &mut Vec<UiEvent>| {
        if let Some((source, changes)) = current.take() {
            out.push(UiEvent::StateChanged { source, changes });
        }
    };
    for entry in entries {
        match &entry.event {
            SimEvent::PlanApplied { source, .. } => {
                flush(&mut current, &mut out);
                current = Some((*source, Vec::new()));
            }
            SimEvent::SettingChanged { path, after, .. } => {
                let change = PlannedChange {
                    room: path.room.clone(),
                    device: path.device.clone(),
                    setting: path.setting.clone(),
                    value: after.to_json(),
                };
                match &mut current {
                    Some((_, changes)) => changes.push(change),
                    None => current = Some((PlanSource::User, vec![change])),
                }
            }
            SimEvent::RoutineFired { routine_id, .. } => {
                flush(&mut current, &mut out);
                out.push(UiEvent::RoutineFired { routine_id: *routine_id });
            }
            SimEvent::RoutineInstalled { routine_id } => {
                flush(&mut current, &mut out);
                out.push(UiEvent::RoutineInstalled { routine_id: *routine_id, duplicate: false });
            }
            SimEvent::RoutineRemoved { routine_id } => {
                flush(&mut current, &mut out);
                out.push(UiEvent::RoutineRemoved { routine_id: *routine_id });
            }
            _ => {}
        }
    }
    flush(&mut current, &mut out);
    out
}

/// Append-only, FIFO. Readers poll by cursor and wait on the length.
pub struct EventStream {
    records: Mutex<Vec<UiEventRecord>>,
    len: watch::Sender<u64>,
}

impl Default for EventStream {
    fn default() -> Self {
        EventStream { records: Mutex::new(Vec::new()), len: watch::Sender::new(0) }
    }
}

impl EventStream {
    pub fn push(&self, event: UiEvent) -> u64 {
        let mut records = self.records.lock().expect("event stream lock");
        let seq = records.len() as u64;
        records.push(UiEventRecord { seq, event });
        self.len.send_replace(seq + 1);
        seq
    }

    pub fn extend(&self, events: impl IntoIterator<Item = UiEvent>) {
        for event in events {
            self.push(event);
        }
    }

    /// Records with `seq >= cursor`.
    pub fn since(&self, cursor: u64) -> Vec<UiEventRecord> {
        let records = self.records.lock().expect("event stream lock");
        records.get(cursor as usize..).map(<[_]>::to_vec).unwrap_or_default()
    }

    pub fn len(&self) -> u64 {
        *self.len.borrow()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn watch(&self) -> watch::Receiver<u64> {
        self.len.subscribe()
    }
}
