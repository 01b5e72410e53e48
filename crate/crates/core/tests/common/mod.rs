#![allow(dead_code)]

pub mod md5;

use pdid::radius::{attr, Attribute, Code, RadiusPacket};
use proptest::prelude::*;

/// Response authenticator computed with the oracle.
pub fn oracle_response_authenticator(code: u8, id: u8, attrs: &[u8], request_auth: &[u8; 16], secret: &[u8]) -> [u8; 16] {
    let len = (20 + attrs.len()) as u16;
    let mut buf = vec![code, id];
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(request_auth);
    buf.extend_from_slice(attrs);
    buf.extend_from_slice(secret);
    md5::md5(&buf)
}

pub fn any_code() -> impl Strategy<Value = Code> {
    prop::sample::select(vec![
        Code::AccessRequest,
        Code::AccessAccept,
        Code::AccessReject,
        Code::AccountingRequest,
        Code::AccountingResponse,
    ])
}

pub fn any_attribute() -> impl Strategy<Value = Attribute> {
    prop_oneof![
        (any::<u8>(), prop::collection::vec(any::<u8>(), 0..=253)).prop_map(|(t, v)| Attribute::new(t, v)),
        "[ -~]{0,64}".prop_map(|s| Attribute::text(attr::USER_NAME, &s)),
        any::<u32>().prop_map(|n| Attribute::integer(attr::NAS_PORT, n)),
    ]
}

/// Packets that fit the 4096-octet limit.
pub fn any_packet() -> impl Strategy<Value = RadiusPacket> {
    (any_code(), any::<u8>(), any::<[u8; 16]>(), prop::collection::vec(any_attribute(), 0..=15)).prop_map(
        |(code, id, auth, attrs)| {
            let mut p = RadiusPacket::new(code, id, auth);
            p.attributes = attrs;
            p
        },
    )
}
