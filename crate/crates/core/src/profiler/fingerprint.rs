use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::identity::Fingerprint;

/// Attributes that define a behavioral fingerprint. Hostname is deliberately
/// absent: users rename devices.
pub const FINGERPRINT_ATTRIBUTES: [&str; 3] = ["dhcp_option_list", "dhcp_vendor_class", "user_agent"];

/// Product family of a User-Agent string: the first product token without
/// its version, e.g. `MedPumpOS` for `MedPumpOS/2.1 (build 7)`.
pub fn user_agent_family(ua: &str) -> Option<String> {
    let token = ua.split_whitespace().next()?;
    let family = token.split('/').next()?.trim();
    (!family.is_empty()).then(|| family.to_string())
}

/// DHCP parameter request list as a sorted, comma-joined set of option codes.
fn canonical_option_list(raw: &str) -> Option<String> {
    let mut opts: Vec<u16> = raw
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect();
    if opts.is_empty() {
        return None;
    }
    opts.sort_unstable();
    opts.dedup();
    Some(opts.iter().map(u16::to_string).collect::<Vec<_>>().join(","))
}

/// SHA-256 over the canonicalized selected attributes, one `key=value` line
/// each in key order. `None` when no selected attribute is present.
pub fn fingerprint_attrs(attrs: &BTreeMap<String, String>) -> Option<Fingerprint> {
    let mut selected = BTreeMap::new();
    if let Some(v) = attrs.get("dhcp_option_list").and_then(|v| canonical_option_list(v)) {
        selected.insert("dhcp_option_list", v);
    }
    if let Some(v) = attrs.get("dhcp_vendor_class").map(|v| v.trim()).filter(|v| !v.is_empty()) {
        selected.insert("dhcp_vendor_class", v.to_string());
    }
    if let Some(v) = attrs.get("user_agent").and_then(|v| user_agent_family(v)) {
        selected.insert("user_agent", v);
    }
    if selected.is_empty() {
        return None;
    }
    let mut h = Sha256::new();
    for (k, v) in &selected {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    let digest = h.finalize();
    Some(Fingerprint(digest.iter().map(|b| format!("{b:02x}")).collect()))
}
