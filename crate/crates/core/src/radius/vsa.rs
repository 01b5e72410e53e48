//! Vendor-Specific Attributes carrying the device identifier and identity
//! signals.
//!
//! Layout of one attribute (all integers big-endian):
//!
//! ```text
//!  0        1        2                 6        8        10
//! +--------+--------+-----------------+--------+--------+-------------
//! | 26     | length | vendor id 32473 | v-type | v-len  | v-value ...
//! +--------+--------+-----------------+--------+--------+-------------
//! ```
//!
//! `v-type` and `v-len` are two octets each; `v-len` counts itself, `v-type`
//! and the value. The PDID attribute is therefore 2 + 4 + 2 + 2 + 16 = 26
//! octets long.

use thiserror::Error;
use uuid::Uuid;

use super::packet::{attr, Attribute, MAX_ATTRIBUTE_VALUE_LEN};
use crate::identity::Pdid;

/// IANA enterprise number reserved for documentation (RFC 5612).
pub const VENDOR_ID: u32 = 32473;

const VSA_HEADER_LEN: usize = 8;
pub const MAX_VENDOR_VALUE_LEN: usize = MAX_ATTRIBUTE_VALUE_LEN - VSA_HEADER_LEN;

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VendorType {
    Pdid = 1,
    CertificateIdentity = 2,
    MdmEnrollment = 3,
    AgentId = 4,
    /// Text tag naming the access flow (`guest-hotspot`, `mab`, `dot1x`, `vpn`).
    UseCaseHint = 5,
    /// `key=value` device attribute observed by the NAS.
    DeviceAttribute = 6,
}

impl VendorType {
    pub fn from_u16(v: u16) -> Option<Self> {
        Some(match v {
            1 => VendorType::Pdid,
            2 => VendorType::CertificateIdentity,
            3 => VendorType::MdmEnrollment,
            4 => VendorType::AgentId,
            5 => VendorType::UseCaseHint,
            6 => VendorType::DeviceAttribute,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VsaError {
    #[error("vendor value of {0} octets exceeds {MAX_VENDOR_VALUE_LEN}")]
    TooLong(usize),
}

/// A decoded vendor sub-attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VendorAttribute<'a> {
    pub vendor_id: u32,
    pub vendor_type: u16,
    pub value: &'a [u8],
}

pub fn encode_vsa(vendor_type: VendorType, value: &[u8]) -> Result<Attribute, VsaError> {
    if value.len() > MAX_VENDOR_VALUE_LEN {
        return Err(VsaError::TooLong(value.len()));
    }
    let mut out = Vec::with_capacity(VSA_HEADER_LEN + value.len());
    out.extend_from_slice(&VENDOR_ID.to_be_bytes());
    out.extend_from_slice(&(vendor_type as u16).to_be_bytes());
    out.extend_from_slice(&((value.len() + 4) as u16).to_be_bytes());
    out.extend_from_slice(value);
    Ok(Attribute::new(attr::VENDOR_SPECIFIC, out))
}

/// Parses a type-26 attribute in the layout above. Returns `None` for other
/// attribute types or a malformed sub-header.
pub fn parse_vsa(a: &Attribute) -> Option<VendorAttribute<'_>> {
    if a.typ != attr::VENDOR_SPECIFIC || a.value.len() < VSA_HEADER_LEN {
        return None;
    }
    let v = &a.value;
    let vendor_id = u32::from_be_bytes([v[0], v[1], v[2], v[3]]);
    let vendor_type = u16::from_be_bytes([v[4], v[5]]);
    let vendor_len = u16::from_be_bytes([v[6], v[7]]) as usize;
    if vendor_len != v.len() - 4 {
        return None;
    }
    Some(VendorAttribute {
        vendor_id,
        vendor_type,
        value: &v[VSA_HEADER_LEN..],
    })
}

/// Sub-attributes of our vendor, in packet order.
pub fn own_vsas(attributes: &[Attribute]) -> impl Iterator<Item = (VendorType, &[u8])> {
    attributes
        .iter()
        .filter_map(parse_vsa)
        .filter(|v| v.vendor_id == VENDOR_ID)
        .filter_map(|v| VendorType::from_u16(v.vendor_type).map(|t| (t, v.value)))
}

/// The 26-octet attribute carrying the 16 raw identifier octets.
pub fn encode_pdid_attribute(pdid: Pdid) -> Attribute {
    encode_vsa(VendorType::Pdid, pdid.as_bytes()).expect("16 octets always fit")
}

pub fn decode_pdid_attribute(a: &Attribute) -> Option<Pdid> {
    let v = parse_vsa(a)?;
    if v.vendor_id != VENDOR_ID || v.vendor_type != VendorType::Pdid as u16 {
        return None;
    }
    let bytes: [u8; 16] = v.value.try_into().ok()?;
    Pdid::from_uuid(Uuid::from_bytes(bytes))
}

/// Every PDID attribute in a packet's attribute list.
pub fn find_pdids(attributes: &[Attribute]) -> Vec<Pdid> {
    attributes.iter().filter_map(decode_pdid_attribute).collect()
}
