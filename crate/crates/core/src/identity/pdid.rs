use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use uuid::{Builder, Uuid, Variant};

/// Persistent Device Identifier: a version-4 UUID naming one physical device
/// independent of the MAC addresses it presents.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pdid(Uuid);

#[derive(Debug, Error)]
#[error("entropy source unavailable: {0}")]
pub struct EntropyUnavailable(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0:?} is not a version-4 UUID")]
pub struct PdidParseError(pub String);

impl Pdid {
    /// Accepts only RFC 4122 version-4 values.
    pub fn from_uuid(u: Uuid) -> Option<Self> {
        (u.get_version_num() == 4 && u.get_variant() == Variant::RFC4122).then_some(Pdid(u))
    }

    pub fn uuid(&self) -> Uuid {
        self.0
    }

    /// The 16 octets in big-endian UUID field order.
    pub fn as_bytes(&self) -> &[u8; 16] {
        self.0.as_bytes()
    }
}

/// Draws 122 random bits from a cryptographically secure generator and sets
/// the version and variant fields.
pub fn generate_pdid<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<Pdid, EntropyUnavailable> {
    let mut bytes = [0u8; 16];
    rng.try_fill_bytes(&mut bytes)
        .map_err(|e| EntropyUnavailable(e.to_string()))?;
    Ok(Pdid(Builder::from_random_bytes(bytes).into_uuid()))
}

impl fmt::Display for Pdid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0.hyphenated(), f)
    }
}

impl fmt::Debug for Pdid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pdid({})", self.0.hyphenated())
    }
}

impl FromStr for Pdid {
    type Err = PdidParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s)
            .ok()
            .and_then(Pdid::from_uuid)
            .ok_or_else(|| PdidParseError(s.to_string()))
    }
}

impl Serialize for Pdid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pdid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
