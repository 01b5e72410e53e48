use std::fmt;

use thiserror::Error;

/// Fixed RADIUS header: code, identifier, length, authenticator.
pub const HEADER_LEN: usize = 20;
/// Largest datagram a RADIUS peer may send.
pub const MAX_PACKET_LEN: usize = 4096;
/// Largest attribute value; the length octet covers type + length + value.
pub const MAX_ATTRIBUTE_VALUE_LEN: usize = 253;

/// Standard attribute types used by the service.
pub mod attr {
    pub const USER_NAME: u8 = 1;
    pub const NAS_IP_ADDRESS: u8 = 4;
    pub const NAS_PORT: u8 = 5;
    pub const SERVICE_TYPE: u8 = 6;
    pub const VENDOR_SPECIFIC: u8 = 26;
    pub const CALLED_STATION_ID: u8 = 30;
    pub const CALLING_STATION_ID: u8 = 31;
    pub const NAS_IDENTIFIER: u8 = 32;
    pub const PROXY_STATE: u8 = 33;
    pub const ACCT_STATUS_TYPE: u8 = 40;
    pub const ACCT_INPUT_OCTETS: u8 = 42;
    pub const ACCT_OUTPUT_OCTETS: u8 = 43;
    pub const ACCT_SESSION_ID: u8 = 44;
    pub const NAS_PORT_ID: u8 = 87;
}

/// Service-Type value NAS devices send for MAC Authentication Bypass.
pub const SERVICE_TYPE_CALL_CHECK: u32 = 10;

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Code {
    AccessRequest = 1,
    AccessAccept = 2,
    AccessReject = 3,
    AccountingRequest = 4,
    AccountingResponse = 5,
}

impl Code {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Code::AccessRequest,
            2 => Code::AccessAccept,
            3 => Code::AccessReject,
            4 => Code::AccountingRequest,
            5 => Code::AccountingResponse,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("datagram of {0} octets is shorter than the RADIUS header")]
    TooShort(usize),
    #[error("declared length {declared} does not match {actual} usable octets")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown packet code {0}")]
    UnknownCode(u8),
    #[error("encoded packet would be {0} octets, above the 4096 limit")]
    Oversize(usize),
    #[error("attribute {typ} value of {len} octets exceeds 253")]
    AttributeTooLong { typ: u8, len: usize },
}

/// One type-length-value attribute. The length octet is derived on encode.
#[derive(Clone, PartialEq, Eq)]
pub struct Attribute {
    pub typ: u8,
    pub value: Vec<u8>,
}

impl Attribute {
    pub fn new(typ: u8, value: impl Into<Vec<u8>>) -> Self {
        Attribute {
            typ,
            value: value.into(),
        }
    }

    pub fn text(typ: u8, value: &str) -> Self {
        Attribute::new(typ, value.as_bytes())
    }

    pub fn integer(typ: u8, value: u32) -> Self {
        Attribute::new(typ, value.to_be_bytes())
    }

    /// On-wire size: type octet, length octet, value.
    pub fn wire_len(&self) -> usize {
        self.value.len() + 2
    }

    pub fn as_text(&self) -> Option<&str> {
        std::str::from_utf8(&self.value).ok()
    }

    pub fn as_integer(&self) -> Option<u32> {
        let bytes: [u8; 4] = self.value.as_slice().try_into().ok()?;
        Some(u32::from_be_bytes(bytes))
    }
}

impl fmt::Debug for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Attribute")
            .field("typ", &self.typ)
            .field("len", &self.value.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadiusPacket {
    pub code: Code,
    pub identifier: u8,
    pub authenticator: [u8; 16],
    pub attributes: Vec<Attribute>,
}

impl RadiusPacket {
    pub fn new(code: Code, identifier: u8, authenticator: [u8; 16]) -> Self {
        RadiusPacket {
            code,
            identifier,
            authenticator,
            attributes: Vec::new(),
        }
    }

    pub fn with_attribute(mut self, attr: Attribute) -> Self {
        self.attributes.push(attr);
        self
    }

    pub fn first(&self, typ: u8) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.typ == typ)
    }

    pub fn all(&self, typ: u8) -> impl Iterator<Item = &Attribute> {
        self.attributes.iter().filter(move |a| a.typ == typ)
    }

    /// Header plus the encoded size of every attribute.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.attributes.iter().map(Attribute::wire_len).sum::<usize>()
    }
}

/// Parses one datagram payload. Bytes past the declared length are rejected.
pub fn decode_packet(raw: &[u8]) -> Result<RadiusPacket, CodecError> {
    if raw.len() < HEADER_LEN {
        return Err(CodecError::TooShort(raw.len()));
    }
    let declared = u16::from_be_bytes([raw[2], raw[3]]) as usize;
    if declared != raw.len() || !(HEADER_LEN..=MAX_PACKET_LEN).contains(&declared) {
        return Err(CodecError::LengthMismatch {
            declared,
            actual: raw.len(),
        });
    }
    let code = Code::from_u8(raw[0]).ok_or(CodecError::UnknownCode(raw[0]))?;
    let mut authenticator = [0u8; 16];
    authenticator.copy_from_slice(&raw[4..HEADER_LEN]);

    let mut attributes = Vec::new();
    let mut offset = HEADER_LEN;
    while offset < declared {
        if offset + 2 > declared {
            return Err(CodecError::LengthMismatch {
                declared,
                actual: offset + 2,
            });
        }
        let typ = raw[offset];
        let len = raw[offset + 1] as usize;
        if len < 2 || offset + len > declared {
            return Err(CodecError::LengthMismatch {
                declared,
                actual: offset + len,
            });
        }
        attributes.push(Attribute::new(typ, &raw[offset + 2..offset + len]));
        offset += len;
    }

    Ok(RadiusPacket {
        code,
        identifier: raw[1],
        authenticator,
        attributes,
    })
}

/// Encodes the attribute list alone, as it appears after the header.
pub fn encode_attributes(attributes: &[Attribute]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(attributes.iter().map(Attribute::wire_len).sum());
    for a in attributes {
        if a.value.len() > MAX_ATTRIBUTE_VALUE_LEN {
            return Err(CodecError::AttributeTooLong {
                typ: a.typ,
                len: a.value.len(),
            });
        }
        out.push(a.typ);
        out.push(a.wire_len() as u8);
        out.extend_from_slice(&a.value);
    }
    Ok(out)
}

pub fn encode_packet(p: &RadiusPacket) -> Result<Vec<u8>, CodecError> {
    let len = p.encoded_len();
    if len > MAX_PACKET_LEN {
        return Err(CodecError::Oversize(len));
    }
    let attrs = encode_attributes(&p.attributes)?;
    let mut out = Vec::with_capacity(len);
    out.push(p.code as u8);
    out.push(p.identifier);
    out.extend_from_slice(&(len as u16).to_be_bytes());
    out.extend_from_slice(&p.authenticator);
    out.extend_from_slice(&attrs);
    Ok(out)
}
