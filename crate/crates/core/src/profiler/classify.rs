use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::identity::DeviceRecord;
use crate::mac::OuiRegistry;

pub const BEHAVIOR_WEIGHT: u32 = 2;
pub const OUI_WEIGHT: u32 = 1;

/// A device class described by profile attributes and, optionally, the
/// manufacturer prefix. Attribute patterns are case-insensitive globs where
/// `*` matches any run of characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRule {
    pub name: String,
    #[serde(default)]
    pub required_attrs: BTreeMap<String, String>,
    #[serde(default)]
    pub oui_vendor: Option<String>,
    /// Minimum score for the rule to fire.
    #[serde(default = "default_threshold")]
    pub threshold: u32,
}

fn default_threshold() -> u32 {
    1
}

impl ClassificationRule {
    pub fn new(name: &str) -> Self {
        ClassificationRule {
            name: name.to_string(),
            required_attrs: BTreeMap::new(),
            oui_vendor: None,
            threshold: 1,
        }
    }

    pub fn attr(mut self, key: &str, pattern: &str) -> Self {
        self.required_attrs.insert(key.to_string(), pattern.to_string());
        self
    }

    pub fn oui(mut self, vendor: &str) -> Self {
        self.oui_vendor = Some(vendor.to_string());
        self
    }

    pub fn threshold(mut self, t: u32) -> Self {
        self.threshold = t;
        self
    }
}

pub fn glob_match(pattern: &str, value: &str) -> bool {
    let p: Vec<char> = pattern.to_lowercase().chars().collect();
    let v: Vec<char> = value.to_lowercase().chars().collect();
    let (mut pi, mut vi) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while vi < v.len() {
        if pi < p.len() && p[pi] == '*' {
            backtrack = Some((pi, vi));
            pi += 1;
        } else if pi < p.len() && p[pi] == v[vi] {
            pi += 1;
            vi += 1;
        } else if let Some((bp, bv)) = backtrack {
            pi = bp + 1;
            vi = bv + 1;
            backtrack = Some((bp, bv + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|c| *c == '*')
}

/// Vendors the record can legitimately claim: the retained historical OUI
/// plus any universal MAC it currently holds. Randomized MACs contribute
/// nothing.
fn record_vendors<'a>(record: &'a DeviceRecord, registry: &'a OuiRegistry) -> Vec<&'a str> {
    let mut out: Vec<&str> = record
        .historical_oui
        .iter()
        .filter_map(|h| h.vendor.as_deref())
        .collect();
    for e in &record.macs {
        if let Some(v) = e.mac.oui().and_then(|o| registry.vendor(o)) {
            out.push(v);
        }
    }
    out
}

/// Score of one rule against one record: two points per matching behavioral
/// attribute and one for a matching manufacturer.
pub fn score(record: &DeviceRecord, rule: &ClassificationRule, registry: &OuiRegistry) -> u32 {
    let behavior = rule
        .required_attrs
        .iter()
        .filter(|(k, pat)| record.profile_value(k).is_some_and(|v| glob_match(pat, v)))
        .count() as u32;
    let oui = match &rule.oui_vendor {
        Some(want) => record_vendors(record, registry)
            .iter()
            .any(|v| v.eq_ignore_ascii_case(want)) as u32,
        None => 0,
    };
    behavior * BEHAVIOR_WEIGHT + oui * OUI_WEIGHT
}

/// Highest-scoring rule at or above its threshold. A tie between differently
/// named rules is ambiguous and yields no class.
pub fn classify(record: &DeviceRecord, rules: &[ClassificationRule], registry: &OuiRegistry) -> Option<String> {
    let mut best: Option<(u32, &str)> = None;
    let mut tied = false;
    for rule in rules {
        let s = score(record, rule, registry);
        if s == 0 || s < rule.threshold {
            continue;
        }
        match best {
            Some((b, name)) if s == b && name != rule.name => tied = true,
            Some((b, _)) if s <= b => {}
            _ => {
                best = Some((s, &rule.name));
                tied = false;
            }
        }
    }
    if tied {
        None
    } else {
        best.map(|(_, n)| n.to_string())
    }
}

/// Small built-in rule set covering the bundled scenarios.
pub fn default_rules() -> Vec<ClassificationRule> {
    vec![
        ClassificationRule::new("MedPump-X")
            .attr("dhcp_vendor_class", "MedPump*")
            .attr("user_agent", "MedPumpOS/*")
            .oui("Philips Medical Systems")
            .threshold(3),
        ClassificationRule::new("IP Camera")
            .attr("dhcp_vendor_class", "AxisCam*")
            .oui("Axis Communications AB")
            .threshold(2),
        ClassificationRule::new("Printer")
            .attr("dhcp_vendor_class", "Brother*")
            .oui("Brother Industries, Ltd.")
            .threshold(2),
        ClassificationRule::new("Smart Lighting")
            .attr("dhcp_vendor_class", "hue*")
            .oui("Philips Lighting BV")
            .threshold(2),
        ClassificationRule::new("Android Phone").attr("dhcp_vendor_class", "android-dhcp-*"),
        ClassificationRule::new("Windows PC").attr("dhcp_vendor_class", "MSFT 5.0"),
        ClassificationRule::new("Apple Device").oui("Apple, Inc."),
    ]
}
