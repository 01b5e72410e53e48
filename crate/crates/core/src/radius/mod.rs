//! RADIUS wire format (RFC 2865 / RFC 2866 framing) plus the vendor
//! attributes that carry device identity.

mod auth;
mod packet;
mod signals;
pub mod vsa;

pub use auth::{
    compute_accounting_request_authenticator, compute_response_authenticator, encode_accounting_request,
    encode_response, verify_accounting_request, verify_response, SharedSecret,
};
pub use packet::{
    attr, decode_packet, encode_attributes, encode_packet, Attribute, Code, CodecError, RadiusPacket,
    HEADER_LEN, MAX_ATTRIBUTE_VALUE_LEN, MAX_PACKET_LEN, SERVICE_TYPE_CALL_CHECK,
};
pub use signals::{extract_signals, SignalError};
pub use vsa::{decode_pdid_attribute, encode_pdid_attribute, encode_vsa, find_pdids, VendorType, VENDOR_ID};
