use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mac::MacAddress;

/// Device categories, declared in the row order used by reports.
#[derive(Debug, Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UseCase {
    ByodCert,
    Managed,
    VpnPosture,
    NonVpnPosture,
    GuestRegistered,
    GuestHotspot,
    IotFixed,
    IotRandomized,
}

impl UseCase {
    pub const ALL: [UseCase; 8] = [
        UseCase::ByodCert,
        UseCase::Managed,
        UseCase::VpnPosture,
        UseCase::NonVpnPosture,
        UseCase::GuestRegistered,
        UseCase::GuestHotspot,
        UseCase::IotFixed,
        UseCase::IotRandomized,
    ];

    pub fn label(self) -> &'static str {
        match self {
            UseCase::ByodCert => "BYOD (Certificate)",
            UseCase::Managed => "MDM-Managed",
            UseCase::VpnPosture => "VPN Posture",
            UseCase::NonVpnPosture => "Non-VPN Posture",
            UseCase::GuestRegistered => "Guest (Registered)",
            UseCase::GuestHotspot => "Guest (Hotspot)",
            UseCase::IotFixed => "IoT (Fixed MAC)",
            UseCase::IotRandomized => "IoT (Randomized)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            UseCase::ByodCert => "byod_cert",
            UseCase::Managed => "managed",
            UseCase::VpnPosture => "vpn_posture",
            UseCase::NonVpnPosture => "non_vpn_posture",
            UseCase::GuestRegistered => "guest_registered",
            UseCase::GuestHotspot => "guest_hotspot",
            UseCase::IotFixed => "iot_fixed",
            UseCase::IotRandomized => "iot_randomized",
        }
    }

    /// Open hotspot access offers nothing to correlate on; its repeat
    /// connections are expected to land on fresh records.
    pub fn correlatable(self) -> bool {
        self != UseCase::GuestHotspot
    }

    pub fn is_mab(self) -> bool {
        matches!(self, UseCase::IotFixed | UseCase::IotRandomized)
    }

    fn default_strategy(self) -> Strategy {
        match self {
            UseCase::IotFixed => Strategy::FixedMac,
            _ => Strategy::PerConnection,
        }
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FixedMac,
    PerNetwork,
    PerConnection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceGroup {
    pub id: String,
    #[serde(default = "one")]
    pub count: usize,
    pub use_case: UseCase,
    #[serde(default)]
    pub strategy: Option<Strategy>,
    /// Devices sharing a model share a behavioral fingerprint. Without one,
    /// every device gets its own.
    #[serde(default)]
    pub model: Option<String>,
    /// Guest credential shared by the whole group.
    #[serde(default)]
    pub username: Option<String>,
    /// Send the model attributes as device-attribute VSAs in Access-Requests.
    #[serde(default)]
    pub report_attrs: bool,
    #[serde(default)]
    pub nas: Option<String>,
    /// Port shared by the whole group; by default each device has its own.
    #[serde(default)]
    pub port: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Action {
    /// Each repetition is a new connection: rotating strategies present a new MAC.
    Connect {
        devices: Vec<String>,
        #[serde(default)]
        network: Option<String>,
        #[serde(default = "one_u32")]
        repeat: u32,
        #[serde(default)]
        interval: u64,
        #[serde(default = "yes")]
        accounting: bool,
    },
    /// Same as `connect`; reads better after a first connection.
    Reconnect {
        devices: Vec<String>,
        #[serde(default)]
        network: Option<String>,
        #[serde(default = "one_u32")]
        repeat: u32,
        #[serde(default)]
        interval: u64,
        #[serde(default = "yes")]
        accounting: bool,
    },
    /// A DHCP exchange on the device's current MAC, fed to the profiler.
    Dhcp {
        devices: Vec<String>,
        #[serde(default)]
        network: Option<String>,
    },
    /// `count` simultaneous first-contact Access-Requests per device.
    Burst {
        devices: Vec<String>,
        #[serde(default)]
        network: Option<String>,
        #[serde(default = "burst_default")]
        count: usize,
    },
    ToggleFeature {
        enabled: bool,
    },
    Prune,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduledEvent {
    /// Seconds since the start of the run.
    pub at: u64,
    #[serde(flatten)]
    pub action: Action,
}

/// An expected metric value: a number or a `{"min": .., "max": ..}` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expectation {
    Exact(f64),
    Range {
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
}

impl Expectation {
    pub fn holds(&self, actual: f64) -> bool {
        const EPS: f64 = 1e-9;
        match *self {
            Expectation::Exact(v) => (actual - v).abs() <= EPS,
            Expectation::Range { min, max } => {
                min.is_none_or(|m| actual >= m - EPS) && max.is_none_or(|m| actual <= m + EPS)
            }
        }
    }
}

impl std::fmt::Display for Expectation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expectation::Exact(v) => write!(f, "= {v}"),
            Expectation::Range { min: Some(a), max: Some(b) } => write!(f, "in [{a}, {b}]"),
            Expectation::Range { min: Some(a), max: None } => write!(f, ">= {a}"),
            Expectation::Range { min: None, max: Some(b) } => write!(f, "<= {b}"),
            Expectation::Range { min: None, max: None } => write!(f, "any"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_networks")]
    pub networks: Vec<String>,
    #[serde(default = "yes")]
    pub feature_enabled: bool,
    #[serde(default)]
    pub devices: Vec<DeviceGroup>,
    #[serde(default)]
    pub schedule: Vec<ScheduledEvent>,
    #[serde(default)]
    pub expect: BTreeMap<String, Expectation>,
}

fn one() -> usize {
    1
}
fn one_u32() -> u32 {
    1
}
fn yes() -> bool {
    true
}
fn burst_default() -> usize {
    64
}
fn default_networks() -> Vec<String> {
    vec!["corp".to_string()]
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// One simulated physical device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimDevice {
    pub index: usize,
    pub true_id: String,
    pub group: String,
    pub use_case: UseCase,
    pub strategy: Strategy,
    pub base_mac: MacAddress,
    pub model: String,
    pub username: Option<String>,
    pub report_attrs: bool,
    pub nas: Option<String>,
    pub port: String,
}

impl SimDevice {
    /// Attributes a DHCP exchange or HTTP request from this device reveals.
    pub fn model_attrs(&self) -> BTreeMap<String, String> {
        model_attrs(&self.model)
    }
}

/// Behavioral attributes for a device model. A few models are spelled out;
/// others get stable synthetic values.
pub fn model_attrs(model: &str) -> BTreeMap<String, String> {
    let (options, vendor_class, ua): (String, String, String) = match model {
        "MedPump-X" => ("1,3,6,15,28,43,60".into(), "MedPump-X 3.2".into(), "MedPumpOS/2.1".into()),
        "AxisCam" => ("1,3,6,12,15,28,42".into(), "AxisCam P3245".into(), "AxisOS/10.12".into()),
        "Hue" => ("1,3,6,15,28,42".into(), "hue-bridge".into(), "HueOS/1.60".into()),
        "Pixel" => ("1,3,6,15,26,28,51,58,59,43".into(), "android-dhcp-14".into(), "Dalvik/2.1.0".into()),
        "Laptop" => ("1,3,6,15,31,33,43,44,46,47,119,121,249,252".into(), "MSFT 5.0".into(), "Mozilla/5.0".into()),
        other => {
            let h = Sha256::digest(other.as_bytes());
            let extra: BTreeSet<u8> = h[..4].iter().map(|b| 64 + b % 160).collect();
            let mut opts = vec![1u8, 3, 6, 15];
            opts.extend(extra);
            let list: Vec<String> = opts.iter().map(u8::to_string).collect();
            (list.join(","), other.to_string(), format!("{}/1.0", other.replace(['/', ' '], "-")))
        }
    };
    BTreeMap::from([
        ("dhcp_option_list".to_string(), options),
        ("dhcp_vendor_class".to_string(), vendor_class),
        ("user_agent".to_string(), ua),
    ])
}

/// MAC a device presents for a connection.
///
/// Fixed-MAC devices always use their burned-in address. Rotating strategies
/// derive a locally administered unicast address from SHA-256 over the seed,
/// the device, the network and (per connection only) the connection index.
pub fn next_mac(d: &SimDevice, network: &str, connection_index: u32, seed: u64) -> MacAddress {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update((d.true_id.len() as u32).to_be_bytes());
    h.update(d.true_id.as_bytes());
    h.update((network.len() as u32).to_be_bytes());
    h.update(network.as_bytes());
    match d.strategy {
        Strategy::FixedMac => return d.base_mac,
        Strategy::PerNetwork => {}
        Strategy::PerConnection => h.update(connection_index.to_be_bytes()),
    }
    let digest = h.finalize();
    let mut b = [0u8; 6];
    b.copy_from_slice(&digest[..6]);
    b[0] = (b[0] | 0x02) & !0x01;
    MacAddress::new(b)
}

fn burned_in_mac(use_case: UseCase, index: usize) -> MacAddress {
    let oui = if use_case.is_mab() { [0x00, 0x09, 0xfb] } else { [0x00, 0x1b, 0x63] };
    let n = (index as u32 + 1).to_be_bytes();
    MacAddress::new([oui[0], oui[1], oui[2], n[1], n[2], n[3]])
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Expands device groups. Single-device groups keep the group id;
    /// larger groups number their members `<id>-<n>`.
    pub fn devices(&self) -> Vec<SimDevice> {
        let mut out = Vec::new();
        for g in &self.devices {
            for i in 0..g.count {
                let index = out.len();
                let true_id = if g.count == 1 { g.id.clone() } else { format!("{}-{i}", g.id) };
                out.push(SimDevice {
                    index,
                    group: g.id.clone(),
                    use_case: g.use_case,
                    strategy: g.strategy.unwrap_or(g.use_case.default_strategy()),
                    base_mac: burned_in_mac(g.use_case, index),
                    model: g.model.clone().unwrap_or_else(|| format!("{true_id}-model")),
                    username: g.username.clone(),
                    report_attrs: g.report_attrs,
                    nas: g.nas.clone(),
                    port: g.port.clone().unwrap_or_else(|| format!("port-{true_id}")),
                    true_id,
                });
            }
        }
        out
    }

    /// Indices of the devices a selector list names: group ids, device ids or `*`.
    pub fn select(&self, devices: &[SimDevice], selectors: &[String]) -> Result<Vec<usize>, ScenarioError> {
        let mut out = BTreeSet::new();
        for sel in selectors {
            let hits: Vec<usize> = devices
                .iter()
                .filter(|d| sel == "*" || d.group == *sel || d.true_id == *sel)
                .map(|d| d.index)
                .collect();
            if hits.is_empty() {
                return Err(invalid(format!("event references unknown device {sel:?}")));
            }
            out.extend(hits);
        }
        Ok(out.into_iter().collect())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.networks.is_empty() {
            return Err(invalid("at least one network is required"));
        }
        let mut groups = BTreeSet::new();
        for g in &self.devices {
            if g.id.is_empty() || g.id == "*" {
                return Err(invalid(format!("bad device group id {:?}", g.id)));
            }
            if !groups.insert(g.id.as_str()) {
                return Err(invalid(format!("device group {:?} defined twice", g.id)));
            }
            if g.count == 0 {
                return Err(invalid(format!("device group {:?} has count 0", g.id)));
            }
            let strategy = g.strategy.unwrap_or(g.use_case.default_strategy());
            match (g.use_case, strategy) {
                (UseCase::IotFixed, s) if s != Strategy::FixedMac => {
                    return Err(invalid(format!("group {:?}: iot_fixed devices use fixed_mac", g.id)));
                }
                (UseCase::IotRandomized, Strategy::FixedMac) => {
                    return Err(invalid(format!("group {:?}: iot_randomized devices cannot use fixed_mac", g.id)));
                }
                _ => {}
            }
        }
        let devices = self.devices();
        let mut last = 0;
        for (i, ev) in self.schedule.iter().enumerate() {
            if ev.at < last {
                return Err(invalid(format!("event {i} at t={} precedes t={last}", ev.at)));
            }
            last = ev.at;
            let (selectors, network) = match &ev.action {
                Action::Connect {
                    devices, network, repeat, ..
                }
                | Action::Reconnect {
                    devices, network, repeat, ..
                } => {
                    if *repeat == 0 {
                        return Err(invalid(format!("event {i}: repeat must be at least 1")));
                    }
                    (devices, network)
                }
                Action::Dhcp { devices, network } => (devices, network),
                Action::Burst { devices, network, count } => {
                    if !(1..=1024).contains(count) {
                        return Err(invalid(format!("event {i}: burst count must be 1..=1024")));
                    }
                    (devices, network)
                }
                Action::ToggleFeature { .. } | Action::Prune => continue,
            };
            if let Some(n) = network {
                if !self.networks.contains(n) {
                    return Err(invalid(format!("event {i} references unknown network {n:?}")));
                }
            }
            self.select(&devices, selectors)?;
        }
        for key in self.expect.keys() {
            if !super::report::is_metric_name(key) {
                return Err(invalid(format!("unknown metric {key:?} in expect block")));
            }
        }
        Ok(())
    }

    /// The schedule with repetitions unrolled, stably ordered by time.
    pub fn timeline(&self) -> Vec<(u64, Action)> {
        let mut out = Vec::new();
        for ev in &self.schedule {
            match &ev.action {
                Action::Connect { repeat, interval, .. } | Action::Reconnect { repeat, interval, .. } => {
                    for k in 0..*repeat as u64 {
                        out.push((ev.at + k * interval, ev.action.clone()));
                    }
                }
                other => out.push((ev.at, other.clone())),
            }
        }
        out.sort_by_key(|(t, _)| *t);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device(strategy: Strategy) -> SimDevice {
        let s = Scenario::from_json(
            r#"{"name": "t", "devices": [{"id": "d", "use_case": "byod_cert", "strategy": "per_connection"}]}"#,
        )
        .unwrap();
        SimDevice {
            strategy,
            ..s.devices().remove(0)
        }
    }

    #[test]
    fn fixed_mac_never_changes() {
        let d = device(Strategy::FixedMac);
        assert_eq!(next_mac(&d, "corp", 0, 1), d.base_mac);
        assert_eq!(next_mac(&d, "guest", 9, 2), d.base_mac);
        assert!(!d.base_mac.is_locally_administered());
    }

    #[test]
    fn per_network_is_stable_per_network() {
        let d = device(Strategy::PerNetwork);
        let a = next_mac(&d, "corp", 0, 1);
        assert_eq!(a, next_mac(&d, "corp", 5, 1));
        assert_ne!(a, next_mac(&d, "guest", 0, 1));
        assert!(a.is_locally_administered());
        assert_eq!(a.octets()[0] & 1, 0);
    }

    #[test]
    fn per_connection_rotates() {
        let d = device(Strategy::PerConnection);
        let macs: BTreeSet<MacAddress> = (1..=5).map(|i| next_mac(&d, "corp", i, 1)).collect();
        assert_eq!(macs.len(), 5);
        assert!(macs.iter().all(|m| m.is_locally_administered()));
        assert_ne!(next_mac(&d, "corp", 1, 1), next_mac(&d, "corp", 1, 2));
    }

    #[test]
    fn unknown_device_reference_is_invalid() {
        let err = Scenario::from_json(
            r#"{"name": "t", "devices": [{"id": "a", "use_case": "managed"}],
                "schedule": [{"at": 0, "event": "connect", "devices": ["b"]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown device"), "{err}");
    }

    #[test]
    fn times_must_not_go_backwards() {
        let err = Scenario::from_json(
            r#"{"name": "t", "devices": [{"id": "a", "use_case": "managed"}],
                "schedule": [{"at": 10, "event": "prune"}, {"at": 5, "event": "prune"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(_)));
    }

    #[test]
    fn unknown_metric_is_invalid() {
        let err = Scenario::from_json(r#"{"name": "t", "expect": {"bogus": 1}}"#).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(_)));
    }

    #[test]
    fn group_members_are_numbered() {
        let s = Scenario::from_json(r#"{"name": "t", "devices": [{"id": "g", "count": 3, "use_case": "iot_fixed"}]}"#)
            .unwrap();
        let ids: Vec<String> = s.devices().into_iter().map(|d| d.true_id).collect();
        assert_eq!(ids, ["g-0", "g-1", "g-2"]);
    }

    #[test]
    fn repeats_unroll_in_time_order() {
        let s = Scenario::from_json(
            r#"{"name": "t", "devices": [{"id": "a", "use_case": "managed"}],
                "schedule": [{"at": 0, "event": "connect", "devices": ["a"], "repeat": 3, "interval": 100},
                             {"at": 150, "event": "prune"}]}"#,
        )
        .unwrap();
        let times: Vec<u64> = s.timeline().iter().map(|(t, _)| *t).collect();
        assert_eq!(times, [0, 100, 150, 200]);
    }

    #[test]
    fn expectation_forms() {
        let e: Expectation = serde_json::from_str("3").unwrap();
        assert!(e.holds(3.0) && !e.holds(3.1));
        let r: Expectation = serde_json::from_str(r#"{"min": 1}"#).unwrap();
        assert!(r.holds(1.0) && r.holds(9.0) && !r.holds(0.5));
    }
}
