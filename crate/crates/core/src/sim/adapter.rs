//! External device adapters.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::Value;

use crate::home::SettingValue;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdapterError {
    #[error("adapter unreachable: {0}")]
    Unreachable(String),
    #[error("adapter rejected the write: {0}")]
    Rejected(String),
}

/// Transport-agnostic client for a real device.
///
/// Calls block; the simulator only invokes them from its writer.
pub trait DeviceAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn set_setting(&self, room: &str, device: &str, setting: &str, value: &SettingValue) -> Result<(), AdapterError>;
    fn read_state(&self, room: &str, device: &str) -> Result<BTreeMap<String, Value>, AdapterError>;
}

/// Which devices an adapter is bound to. `room: None` matches the device
/// name in every room.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceSelector {
    pub room: Option<String>,
    pub device: String,
}

impl DeviceSelector {
    pub fn device(device: impl Into<String>) -> Self {
        DeviceSelector { room: None, device: device.into() }
    }

    pub fn in_room(room: impl Into<String>, device: impl Into<String>) -> Self {
        DeviceSelector { room: Some(room.into()), device: device.into() }
    }

    pub fn matches(&self, room: &str, device: &str) -> bool {
        self.device == device && self.room.as_deref().is_none_or(|r| r == room)
    }
}

/// In-process adapter that stores what it is sent.
#[derive(Debug, Default)]
pub struct LoopbackAdapter {
    devices: Mutex<BTreeMap<(String, String), BTreeMap<String, Value>>>,
    failures_left: Mutex<u32>,
}

impl LoopbackAdapter {
    pub fn new() -> Self {
        LoopbackAdapter::default()
    }

    /// The next `n` writes fail as unreachable.
    pub fn fail_next(&self, n: u32) {
        *self.failures_left.lock().expect("adapter lock") = n;
    }
}

impl DeviceAdapter for LoopbackAdapter {
    fn name(&self) -> &str {
        "loopback"
    }

    fn set_setting(&self, room: &str, device: &str, setting: &str, value: &SettingValue) -> Result<(), AdapterError> {
        let mut failures = self.failures_left.lock().expect("adapter lock");
        if *failures > 0 {
            *failures -= 1;
            return Err(AdapterError::Unreachable("loopback failure injected".into()));
        }
        self.devices
            .lock()
            .expect("adapter lock")
            .entry((room.to_string(), device.to_string()))
            .or_default()
            .insert(setting.to_string(), value.to_json());
        Ok(())
    }

    fn read_state(&self, room: &str, device: &str) -> Result<BTreeMap<String, Value>, AdapterError> {
        Ok(self
            .devices
            .lock()
            .expect("adapter lock")
            .get(&(room.to_string(), device.to_string()))
            .cloned()
            .unwrap_or_default())
    }
}

/// Generic JSON-over-HTTP bridge.
///
/// `PUT {base}/devices/{room}/{device}/{setting}` with `{"value": v}`;
/// `GET {base}/devices/{room}/{device}` returns `{setting: value}`.
pub struct HttpBridgeAdapter {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpBridgeAdapter {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build();
        HttpBridgeAdapter { base_url: base_url.into().trim_end_matches('/').to_string(), agent: config.into() }
    }

    fn url(&self, parts: &[&str]) -> String {
        let mut url = format!("{}/devices", self.base_url);
        for part in parts {
            url.push('/');
            url.push_str(part);
        }
        url
    }
}

fn status_error(status: u16, body: String) -> AdapterError {
    if status >= 500 {
        AdapterError::Unreachable(format!("status {status}: {body}"))
    } else {
        AdapterError::Rejected(format!("status {status}: {body}"))
    }
}

impl DeviceAdapter for HttpBridgeAdapter {
    fn name(&self) -> &str {
        "http-bridge"
    }

    fn set_setting(&self, room: &str, device: &str, setting: &str, value: &SettingValue) -> Result<(), AdapterError> {
        let mut response = self
            .agent
            .put(&self.url(&[room, device, setting]))
            .send_json(serde_json::json!({ "value": value.to_json() }))
            .map_err(|e| AdapterError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        if (200..300).contains(&status) {
            Ok(())
        } else {
            Err(status_error(status, response.body_mut().read_to_string().unwrap_or_default()))
        }
    }

    fn read_state(&self, room: &str, device: &str) -> Result<BTreeMap<String, Value>, AdapterError> {
        let mut response =
            self.agent.get(&self.url(&[room, device])).call().map_err(|e| AdapterError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(status_error(status, response.body_mut().read_to_string().unwrap_or_default()));
        }
        response.body_mut().read_json().map_err(|e| AdapterError::Rejected(e.to_string()))
    }
}
