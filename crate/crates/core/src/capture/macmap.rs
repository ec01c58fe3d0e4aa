use std::collections::BTreeMap;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::Deserializer;

use super::frame::MacAddr;
use super::session::SessionRecord;
use super::CaptureError;

/// Label for sessions whose initiator MAC is not in the map.
pub const UNMAPPED_LABEL: &str = "unmapped";
/// Label used for unmapped MACs when non-IoT collapsing is on.
pub const NON_IOT_LABEL: &str = "Non-IoT devices";

/// Device MACs of the public IoT Trace capture set, with their device names.
pub const IOT_TRACE_DEVICES: [(&str, &str); 9] = [
    ("ec:1a:59:83:28:11", "Belkin Wemo motion sensor"),
    ("44:65:0d:56:cc:d3", "Amazon Echo"),
    ("00:16:6c:ab:6b:88", "Samsung SmartCam"),
    ("ec:1a:59:79:f4:89", "Belkin Wemo switch"),
    ("70:ee:50:18:34:43", "Netatmo Welcome"),
    ("00:62:6e:51:27:2e", "Insteon camera"),
    ("00:24:e4:20:28:c6", "Withings Aura smart sleep sensor"),
    ("70:ee:50:03:b8:ac", "Netatmo weather station"),
    ("e0:76:d0:33:bb:85", "PIX-STAR photoframe"),
];

/// MAC address to device label mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MacMap {
    entries: BTreeMap<MacAddr, String>,
}

impl MacMap {
    /// Build from `(mac, label)` string pairs. A MAC listed twice (in any
    /// spelling) is a configuration error.
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, CaptureError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (mac, label) in pairs {
            let parsed: MacAddr = mac
                .as_ref()
                .parse()
                .map_err(|e: super::frame::ParseMacError| CaptureError::Config(e.to_string()))?;
            if entries.insert(parsed, label.into()).is_some() {
                return Err(CaptureError::Config(format!("duplicate MAC {parsed} in MAC map")));
            }
        }
        Ok(Self { entries })
    }

    /// Parse a JSON object of `"mac": "label"` entries. Duplicate keys are
    /// rejected rather than silently overwritten.
    pub fn from_json(text: &str) -> Result<Self, CaptureError> {
        struct Pairs;
        impl<'de> Visitor<'de> for Pairs {
            type Value = Vec<(String, String)>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object mapping MAC strings to labels")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, String>()? {
                    out.push(entry);
                }
                Ok(out)
            }
        }
        let mut de = serde_json::Deserializer::from_str(text);
        let pairs = de
            .deserialize_map(Pairs)
            .map_err(|e| CaptureError::Config(format!("MAC map: {e}")))?;
        de.end().map_err(|e| CaptureError::Config(format!("MAC map: {e}")))?;
        Self::from_pairs(pairs)
    }

    pub fn iot_trace() -> Self {
        Self::from_pairs(IOT_TRACE_DEVICES).expect("built-in MAC table is well formed")
    }

    pub fn label(&self, mac: &MacAddr) -> Option<&str> {
        self.entries.get(mac).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MacAddr, &str)> {
        self.entries.iter().map(|(m, l)| (m, l.as_str()))
    }
}

/// How to label sessions from MACs missing in the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnmappedPolicy {
    #[default]
    Unmapped,
    CollapseNonIot,
}

impl UnmappedPolicy {
    pub fn label(self) -> &'static str {
        match self {
            UnmappedPolicy::Unmapped => UNMAPPED_LABEL,
            UnmappedPolicy::CollapseNonIot => NON_IOT_LABEL,
        }
    }
}

pub fn label_for<'a>(mac: &MacAddr, map: &'a MacMap, policy: UnmappedPolicy) -> &'a str {
    map.label(mac).unwrap_or(policy.label())
}

/// Bucket sessions by the device label of their initiator MAC.
pub fn group_by_mac(
    sessions: Vec<SessionRecord>,
    map: &MacMap,
    policy: UnmappedPolicy,
) -> BTreeMap<String, Vec<SessionRecord>> {
    let mut groups: BTreeMap<String, Vec<SessionRecord>> = BTreeMap::new();
    for s in sessions {
        let label = label_for(&s.initiator_mac, map, policy).to_string();
        groups.entry(label).or_default().push(s);
    }
    groups
}
