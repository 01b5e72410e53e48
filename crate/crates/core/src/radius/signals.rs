use thiserror::Error;

use super::packet::{attr, Code, RadiusPacket, SERVICE_TYPE_CALL_CHECK};
use super::vsa::{own_vsas, VendorType};
use crate::correlator::{IdentitySignalSet, UseCaseHint};
use crate::mac::MacAddress;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignalError {
    #[error("Calling-Station-Id {0:?} is not a MAC address")]
    MalformedMac(String),
    #[error("{0:?} packets carry no identity signals")]
    NotARequest(Code),
}

fn text(v: &[u8]) -> String {
    String::from_utf8_lossy(v).into_owned()
}

/// Collects correlation evidence from an Access- or Accounting-Request.
///
/// Attribute sources: Calling-Station-Id (MAC), User-Name (username or guest
/// credential), and our vendor's sub-attributes 2-6. Without an explicit
/// hint VSA, a Service-Type of Call-Check marks the request as MAB.
pub fn extract_signals(p: &RadiusPacket) -> Result<IdentitySignalSet, SignalError> {
    if !matches!(p.code, Code::AccessRequest | Code::AccountingRequest) {
        return Err(SignalError::NotARequest(p.code));
    }
    let mut s = IdentitySignalSet::default();

    if let Some(a) = p.first(attr::CALLING_STATION_ID) {
        let raw = text(&a.value);
        s.mac = Some(MacAddress::parse(&raw).map_err(|_| SignalError::MalformedMac(raw))?);
    }
    if let Some(a) = p.first(attr::USER_NAME) {
        let name = text(&a.value);
        if !name.is_empty() {
            s.username = Some(name);
        }
    }
    for (vt, value) in own_vsas(&p.attributes) {
        match vt {
            VendorType::CertificateIdentity => s.cert_id = Some(text(value)),
            VendorType::MdmEnrollment => s.mdm_id = Some(text(value)),
            VendorType::AgentId => s.agent_id = Some(text(value)),
            VendorType::UseCaseHint => s.use_case_hint = UseCaseHint::parse(&text(value)),
            VendorType::DeviceAttribute => {
                let kv = text(value);
                if let Some((k, v)) = kv.split_once('=') {
                    s.device_attrs.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
            VendorType::Pdid => {}
        }
    }
    if s.use_case_hint.is_none()
        && p.first(attr::SERVICE_TYPE).and_then(|a| a.as_integer()) == Some(SERVICE_TYPE_CALL_CHECK)
    {
        s.use_case_hint = Some(UseCaseHint::Mab);
    }
    // NASes fill User-Name with the MAC on MAB; that is not a credential.
    if s.use_case_hint == Some(UseCaseHint::Mab)
        && s.mac.is_some()
        && s.username.as_deref().and_then(|u| MacAddress::parse(u).ok()) == s.mac
    {
        s.username = None;
    }
    Ok(s)
}
