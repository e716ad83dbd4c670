//! The three reference homes and loading templates from fixture directories.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::template::HomeTemplate;
use super::HomeError;

/// Reference homes of increasing device diversity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinHomeId {
    H1,
    H2,
    H3,
}

impl BuiltinHomeId {
    pub const ALL: [BuiltinHomeId; 3] = [BuiltinHomeId::H1, BuiltinHomeId::H2, BuiltinHomeId::H3];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinHomeId::H1 => "h1",
            BuiltinHomeId::H2 => "h2",
            BuiltinHomeId::H3 => "h3",
        }
    }

    fn documents(self) -> (&'static str, &'static str) {
        match self {
            BuiltinHomeId::H1 => (
                include_str!("../../fixtures/homes/h1/devices.json"),
                include_str!("../../fixtures/homes/h1/sensors.json"),
            ),
            BuiltinHomeId::H2 => (
                include_str!("../../fixtures/homes/h2/devices.json"),
                include_str!("../../fixtures/homes/h2/sensors.json"),
            ),
            BuiltinHomeId::H3 => (
                include_str!("../../fixtures/homes/h3/devices.json"),
                include_str!("../../fixtures/homes/h3/sensors.json"),
            ),
        }
    }
}

impl fmt::Display for BuiltinHomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuiltinHomeId {
    type Err = HomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h1" => Ok(BuiltinHomeId::H1),
            "h2" => Ok(BuiltinHomeId::H2),
            "h3" => Ok(BuiltinHomeId::H3),
            other => Err(HomeError::UnknownHome(other.to_string())),
        }
    }
}

/// The shipped template for a reference home, labelled with its id.
pub fn builtin_home(id: BuiltinHomeId) -> HomeTemplate {
    let (devices, sensors) = id.documents();
    HomeTemplate::parse(devices, sensors)
        .expect("shipped home fixtures are valid")
        .with_label(id.as_str())
}

/// Load `devices.json` and `sensors.json` from a directory; the directory
/// name becomes the template label.
pub fn load_template_dir(dir: &Path) -> Result<HomeTemplate, HomeError> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name))
            .map_err(|e| HomeError::Io(format!("{}: {e}", dir.join(name).display())))
    };
    let template = HomeTemplate::parse(&read("devices.json")?, &read("sensors.json")?)?;
    Ok(match dir.file_name().and_then(|n| n.to_str()) {
        Some(label) => template.with_label(label),
        None => template,
    })
}

/// The case-study apartment (living room, bedroom, studio) used by demos.
pub fn studio_apartment() -> HomeTemplate {
    HomeTemplate::parse(
        include_str!("../../fixtures/homes/studio/devices.json"),
        include_str!("../../fixtures/homes/studio/sensors.json"),
    )
    .expect("shipped studio fixture is valid")
    .with_label("studio")
}
