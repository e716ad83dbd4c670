//! Device-type lexicon and the per-home device catalog.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::template::HomeTemplate;
use super::HomeError;

/// Coarse device category used by the targeting metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceTag {
    Light,
    Climate,
    Entertainment,
    Security,
    Vacuum,
    Appliance,
}

impl DeviceTag {
    pub const ALL: [DeviceTag; 6] = [
        DeviceTag::Light,
        DeviceTag::Climate,
        DeviceTag::Entertainment,
        DeviceTag::Security,
        DeviceTag::Vacuum,
        DeviceTag::Appliance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceTag::Light => "light",
            DeviceTag::Climate => "climate",
            DeviceTag::Entertainment => "entertainment",
            DeviceTag::Security => "security",
            DeviceTag::Vacuum => "vacuum",
            DeviceTag::Appliance => "appliance",
        }
    }
}

impl fmt::Display for DeviceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceTag {
    type Err = HomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeviceTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| HomeError::Shape(format!("unknown device tag {s:?}")))
    }
}

/// Name-substring to tag mapping. The longest matching pattern wins, so
/// `humidifier` is not shadowed by a shorter pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub version: u32,
    pub patterns: BTreeMap<String, DeviceTag>,
}

impl Lexicon {
    pub fn builtin() -> Self {
        Self::from_json(include_str!("../../fixtures/lexicon.json")).expect("shipped lexicon is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, HomeError> {
        serde_json::from_str(text).map_err(|e| HomeError::Syntax { document: "lexicon".into(), message: e.to_string() })
    }

    pub fn tag_for(&self, device_name: &str) -> Option<DeviceTag> {
        let name = device_name.to_ascii_lowercase();
        self.patterns
            .iter()
            .filter(|(pattern, _)| name.contains(pattern.as_str()))
            .max_by_key(|(pattern, _)| pattern.len())
            .map(|(_, tag)| *tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub room: String,
    pub device: String,
    pub tag: DeviceTag,
}

/// One entry per device, tagged through the lexicon.
pub fn device_catalog(template: &HomeTemplate, lexicon: &Lexicon) -> Result<Vec<CatalogEntry>, HomeError> {
    template
        .devices()
        .map(|(room, device, _)| {
            let tag = lexicon
                .tag_for(device)
                .ok_or_else(|| HomeError::UnmappedDeviceName(device.to_string()))?;
            Ok(CatalogEntry { room: room.to_string(), device: device.to_string(), tag })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::home::{builtin_home, studio_apartment, BuiltinHomeId};
    use std::collections::BTreeSet;

    fn tags(id: BuiltinHomeId) -> BTreeSet<DeviceTag> {
        device_catalog(&builtin_home(id), &Lexicon::builtin())
            .unwrap()
            .into_iter()
            .map(|e| e.tag)
            .collect()
    }

    #[test]
    fn h1_is_lights_only() {
        assert_eq!(tags(BuiltinHomeId::H1), BTreeSet::from([DeviceTag::Light]));
    }

    #[test]
    fn homes_add_categories_monotonically() {
        let (h1, h2, h3) = (tags(BuiltinHomeId::H1), tags(BuiltinHomeId::H2), tags(BuiltinHomeId::H3));
        assert!(h1.is_subset(&h2) && h2.is_subset(&h3));
        assert_eq!(
            &h2 - &h1,
            BTreeSet::from([DeviceTag::Climate, DeviceTag::Entertainment])
        );
        assert_eq!(
            &h3 - &h2,
            BTreeSet::from([DeviceTag::Security, DeviceTag::Vacuum, DeviceTag::Appliance])
        );
    }

    #[test]
    fn known_names() {
        let lex = Lexicon::builtin();
        assert_eq!(lex.tag_for("doorbell_camera"), Some(DeviceTag::Security));
        assert_eq!(lex.tag_for("humidifier"), Some(DeviceTag::Appliance));
        assert_eq!(lex.tag_for("ceiling_fan"), Some(DeviceTag::Climate));
        assert_eq!(lex.tag_for("guitar_amp_plug"), Some(DeviceTag::Appliance));
        assert_eq!(lex.tag_for("robot_vacuum"), Some(DeviceTag::Vacuum));
        assert_eq!(lex.tag_for("flux_capacitor"), None);
    }

    #[test]
    fn catalog_edge_cases() {
        let lex = Lexicon::builtin();
        assert!(device_catalog(&HomeTemplate::empty(), &lex).unwrap().is_empty());
        let odd = HomeTemplate::parse(r#"{"garage":{"flux_capacitor":{"state":"bool"}}}"#, "{}").unwrap();
        assert!(matches!(device_catalog(&odd, &lex), Err(HomeError::UnmappedDeviceName(_))));
        let studio = device_catalog(&studio_apartment(), &lex).unwrap();
        assert_eq!(studio.len(), 7);
        let h3 = device_catalog(&builtin_home(BuiltinHomeId::H3), &lex).unwrap();
        let cam = h3.iter().find(|e| e.device == "doorbell_camera").unwrap();
        assert_eq!(cam.tag, DeviceTag::Security);
    }
}
