use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Pdid;
use crate::mac::{MacAddress, Oui};
use crate::time::Timestamp;

/// Depth of the per-key history kept behind the current profile value.
pub const PROFILE_HISTORY_DEPTH: usize = 4;
/// Network contexts remembered per record.
pub const CONTEXT_HISTORY_LEN: usize = 16;
/// Distinct behavioral fingerprints remembered per record.
pub const FINGERPRINT_HISTORY_LEN: usize = 8;

/// The kinds of persistent evidence that bind an authentication to a device.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    Certificate,
    MdmEnrollment,
    AgentId,
    Username,
    Fingerprint,
}

impl AnchorKind {
    pub const ALL: [AnchorKind; 5] = [
        AnchorKind::Certificate,
        AnchorKind::MdmEnrollment,
        AnchorKind::AgentId,
        AnchorKind::Username,
        AnchorKind::Fingerprint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnchorKind::Certificate => "certificate",
            AnchorKind::MdmEnrollment => "mdm_enrollment",
            AnchorKind::AgentId => "agent_id",
            AnchorKind::Username => "username",
            AnchorKind::Fingerprint => "fingerprint",
        }
    }

    pub(crate) fn to_u8(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_u8(v: u8) -> Option<Self> {
        AnchorKind::ALL.get(v as usize).copied()
    }
}

impl fmt::Display for AnchorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnchorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "certificate" | "cert" => AnchorKind::Certificate,
            "mdm_enrollment" | "mdm" => AnchorKind::MdmEnrollment,
            "agent_id" | "agent" => AnchorKind::AgentId,
            "username" | "user" => AnchorKind::Username,
            "fingerprint" => AnchorKind::Fingerprint,
            other => return Err(format!("unknown anchor kind {other:?}")),
        })
    }
}

/// Kinds of network observation fed to the profiler.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Dhcp,
    HttpUserAgent,
    Dns,
    Snmp,
    RadiusMab,
}

/// Where a profile attribute came from.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeSource {
    Observation(ObservationKind),
    Authentication,
    Migration,
}

impl AttributeSource {
    pub(crate) fn to_u8(self) -> u8 {
        match self {
            AttributeSource::Observation(k) => k as u8,
            AttributeSource::Authentication => 16,
            AttributeSource::Migration => 17,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Option<Self> {
        use ObservationKind::*;
        Some(match v {
            0 => AttributeSource::Observation(Dhcp),
            1 => AttributeSource::Observation(HttpUserAgent),
            2 => AttributeSource::Observation(Dns),
            3 => AttributeSource::Observation(Snmp),
            4 => AttributeSource::Observation(RadiusMab),
            16 => AttributeSource::Authentication,
            17 => AttributeSource::Migration,
            _ => return None,
        })
    }
}

/// Canonical digest of a device's selected behavioral attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(pub String);

impl Fingerprint {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Where on the network an event was seen: the reporting NAS and its port.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetworkContext {
    pub nas_id: String,
    pub port: String,
}

impl NetworkContext {
    pub fn new(nas_id: impl Into<String>, port: impl Into<String>) -> Self {
        NetworkContext {
            nas_id: nas_id.into(),
            port: port.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacEntry {
    pub mac: MacAddress,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub value: String,
    pub source: AttributeSource,
    pub t: Timestamp,
}

/// Current value of one profile key plus the values it displaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub value: String,
    pub source: AttributeSource,
    pub t: Timestamp,
    /// Newest first, at most [`PROFILE_HISTORY_DEPTH`] entries.
    pub history: Vec<HistoryEntry>,
}

impl ProfileEntry {
    fn new(value: String, source: AttributeSource, t: Timestamp) -> Self {
        ProfileEntry {
            value,
            source,
            t,
            history: Vec::new(),
        }
    }

    /// Last write wins by timestamp; the loser moves into the history.
    pub(crate) fn merge(&mut self, value: String, source: AttributeSource, t: Timestamp) {
        if value == self.value {
            if t >= self.t {
                self.t = t;
                self.source = source;
            }
            return;
        }
        let incoming = HistoryEntry { value, source, t };
        let displaced = if t >= self.t {
            HistoryEntry {
                value: std::mem::replace(&mut self.value, incoming.value),
                source: std::mem::replace(&mut self.source, incoming.source),
                t: std::mem::replace(&mut self.t, incoming.t),
            }
        } else {
            incoming
        };
        let pos = self
            .history
            .iter()
            .position(|h| h.t < displaced.t)
            .unwrap_or(self.history.len());
        self.history.insert(pos, displaced);
        self.history.truncate(PROFILE_HISTORY_DEPTH);
    }
}

pub(crate) fn merge_profile(
    profile: &mut BTreeMap<String, ProfileEntry>,
    attrs: &BTreeMap<String, String>,
    source: AttributeSource,
    t: Timestamp,
) {
    for (k, v) in attrs {
        match profile.get_mut(k) {
            Some(entry) => entry.merge(v.clone(), source, t),
            None => {
                profile.insert(k.clone(), ProfileEntry::new(v.clone(), source, t));
            }
        }
    }
}

/// Manufacturer prefix retained from a universally administered MAC the
/// device presented at some point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoricalOui {
    pub oui: Oui,
    pub vendor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub context: NetworkContext,
    pub last_seen: Timestamp,
}

/// One physical device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceRecord {
    pub pdid: Pdid,
    pub macs: Vec<MacEntry>,
    pub anchors: BTreeMap<AnchorKind, String>,
    pub profile: BTreeMap<String, ProfileEntry>,
    pub fingerprints: Vec<Fingerprint>,
    pub contexts: Vec<ContextEntry>,
    pub created_at: Timestamp,
    pub last_seen: Timestamp,
    /// Hotspot or otherwise identityless record, excluded from licensing.
    pub ephemeral: bool,
    /// Created from a bare MAB on a randomized MAC; no identity evidence yet.
    pub provisional: bool,
    /// A fingerprint collision was seen and left unresolved.
    pub flagged: bool,
    pub historical_oui: Option<HistoricalOui>,
    pub(crate) created_seq: u64,
}

impl DeviceRecord {
    pub fn has_mac(&self, mac: &MacAddress) -> bool {
        self.macs.iter().any(|e| e.mac == *mac)
    }

    pub fn only_randomized_macs(&self) -> bool {
        self.macs.iter().all(|e| e.mac.is_locally_administered())
    }

    pub fn profile_value(&self, key: &str) -> Option<&str> {
        self.profile.get(key).map(|e| e.value.as_str())
    }

    pub fn seen_in(&self, ctx: &NetworkContext) -> bool {
        self.contexts.iter().any(|c| c.context == *ctx)
    }

    /// Monotonic creation order within one store.
    pub fn creation_sequence(&self) -> u64 {
        self.created_seq
    }
}
