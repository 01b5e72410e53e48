//! 48-bit MAC addresses, the locally-administered bit, and OUI vendor lookup.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed MAC address {0:?}")]
pub struct MacParseError(pub String);

/// A MAC address. Displays in canonical lowercase colon form.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddress([u8; 6]);

impl MacAddress {
    pub const fn new(bytes: [u8; 6]) -> Self {
        MacAddress(bytes)
    }

    pub const fn octets(&self) -> [u8; 6] {
        self.0
    }

    /// Bit 1 of the first octet. Set on randomized addresses.
    pub const fn is_locally_administered(&self) -> bool {
        self.0[0] & 0x02 != 0
    }

    /// The first 24 bits, meaningful only for universally administered addresses.
    pub fn oui(&self) -> Option<Oui> {
        if self.is_locally_administered() {
            None
        } else {
            Some(Oui([self.0[0], self.0[1], self.0[2]]))
        }
    }

    /// Accepts `AA-BB-CC-DD-EE-FF`, `aa:bb:cc:dd:ee:ff`, `aabb.ccdd.eeff` and bare `aabbccddeeff`.
    pub fn parse(text: &str) -> Result<Self, MacParseError> {
        let err = || MacParseError(text.to_string());
        let text = text.trim();
        let hex: String = if text.len() == 17 {
            let sep = text.as_bytes()[2];
            if sep != b':' && sep != b'-' {
                return Err(err());
            }
            for (i, b) in text.bytes().enumerate() {
                if i % 3 == 2 && b != sep {
                    return Err(err());
                }
            }
            text.split(sep as char).collect()
        } else if text.len() == 14 {
            let groups: Vec<&str> = text.split('.').collect();
            if groups.len() != 3 || groups.iter().any(|g| g.len() != 4) {
                return Err(err());
            }
            groups.concat()
        } else if text.len() == 12 {
            text.to_string()
        } else {
            return Err(err());
        };
        if hex.len() != 12 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(err());
        }
        let mut out = [0u8; 6];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = u8::from_str_radix(&hex[i * 2..i * 2 + 2], 16).map_err(|_| err())?;
        }
        Ok(MacAddress(out))
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddress({self})")
    }
}

impl FromStr for MacAddress {
    type Err = MacParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MacAddress::parse(s)
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MacAddress::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Organizationally Unique Identifier: the manufacturer prefix of a universal MAC.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Oui(pub [u8; 3]);

impl fmt::Display for Oui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02x}:{:02x}:{:02x}", self.0[0], self.0[1], self.0[2])
    }
}

impl fmt::Debug for Oui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Oui({self})")
    }
}

impl Oui {
    /// Accepts `aa:bb:cc`, `AA-BB-CC` or `AABBCC`.
    pub fn parse(text: &str) -> Option<Self> {
        let hex: String = text.chars().filter(|c| *c != ':' && *c != '-').collect();
        if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        let mut out = [0u8; 3];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = u8::from_str_radix(&hex[i * 2..i * 2 + 2], 16).ok()?;
        }
        Some(Oui(out))
    }
}

impl Serialize for Oui {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Oui {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Oui::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad OUI {s:?}")))
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("reading OUI registry: {0}")]
    Io(#[from] std::io::Error),
}

/// OUI prefix to vendor name table.
///
/// Text format, one entry per line: `<prefix> <vendor name>` where the prefix
/// is six hex digits optionally separated by `:` or `-`. Blank lines and lines
/// starting with `#` are ignored.
#[derive(Debug, Clone, Default)]
pub struct OuiRegistry {
    vendors: HashMap<Oui, String>,
}

const BUNDLED_REGISTRY: &str = include_str!("../data/oui.txt");

impl OuiRegistry {
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut vendors = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (prefix, vendor) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| RegistryError::Parse {
                    line: idx + 1,
                    reason: "expected `<prefix> <vendor>`".into(),
                })?;
            let oui = Oui::parse(prefix).ok_or_else(|| RegistryError::Parse {
                line: idx + 1,
                reason: format!("bad OUI prefix {prefix:?}"),
            })?;
            let vendor = vendor.trim();
            if vendor.is_empty() {
                return Err(RegistryError::Parse {
                    line: idx + 1,
                    reason: "missing vendor name".into(),
                });
            }
            vendors.insert(oui, vendor.to_string());
        }
        Ok(OuiRegistry { vendors })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, RegistryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The small registry shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_REGISTRY).expect("bundled OUI registry is well-formed")
    }

    pub fn vendor(&self, oui: Oui) -> Option<&str> {
        self.vendors.get(&oui).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.vendors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vendors.is_empty()
    }

    /// Any prefix registered for `vendor`, used by the simulator to mint
    /// manufacturer-assigned addresses.
    pub fn prefix_for(&self, vendor: &str) -> Option<Oui> {
        self.vendors
            .iter()
            .filter(|(_, v)| v.as_str() == vendor)
            .map(|(o, _)| *o)
            .min()
    }
}

/// Vendor of a universally administered MAC. Locally administered addresses
/// carry no manufacturer information and always yield `None`.
pub fn oui_vendor<'a>(mac: &MacAddress, table: &'a OuiRegistry) -> Option<&'a str> {
    table.vendor(mac.oui()?)
}
