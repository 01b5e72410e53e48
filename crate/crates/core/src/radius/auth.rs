//! Shared secrets and the MD5 authenticators of RFC 2865 and RFC 2866.

use std::fmt;

use md5::{Digest, Md5};

use super::packet::{encode_attributes, encode_packet, Attribute, Code, CodecError, RadiusPacket, HEADER_LEN};

/// Secret shared between the server and one NAS. Never printed or encoded.
#[derive(Clone, PartialEq, Eq)]
pub struct SharedSecret(Vec<u8>);

impl SharedSecret {
    /// Returns `None` for an empty secret.
    pub fn new(secret: impl Into<Vec<u8>>) -> Option<Self> {
        let secret = secret.into();
        if secret.is_empty() {
            None
        } else {
            Some(SharedSecret(secret))
        }
    }

    pub fn expose(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedSecret(<redacted>)")
    }
}

fn digest(
    code: u8,
    identifier: u8,
    length: u16,
    authenticator: &[u8; 16],
    encoded_attributes: &[u8],
    secret: &SharedSecret,
) -> [u8; 16] {
    let mut h = Md5::new();
    h.update([code, identifier]);
    h.update(length.to_be_bytes());
    h.update(authenticator);
    h.update(encoded_attributes);
    h.update(secret.expose());
    h.finalize().into()
}

/// MD5(Code | Identifier | Length | RequestAuthenticator | Attributes | Secret).
///
/// `encoded_attributes` is the attribute section exactly as it goes on the wire.
pub fn compute_response_authenticator(
    code: Code,
    identifier: u8,
    encoded_attributes: &[u8],
    request_authenticator: &[u8; 16],
    secret: &SharedSecret,
) -> [u8; 16] {
    let length = (HEADER_LEN + encoded_attributes.len()) as u16;
    digest(
        code as u8,
        identifier,
        length,
        request_authenticator,
        encoded_attributes,
        secret,
    )
}

/// Accounting-Request authenticator: the same digest with sixteen zero
/// octets in place of the authenticator field.
pub fn compute_accounting_request_authenticator(
    identifier: u8,
    encoded_attributes: &[u8],
    secret: &SharedSecret,
) -> [u8; 16] {
    let length = (HEADER_LEN + encoded_attributes.len()) as u16;
    digest(
        Code::AccountingRequest as u8,
        identifier,
        length,
        &[0u8; 16],
        encoded_attributes,
        secret,
    )
}

pub fn verify_accounting_request(p: &RadiusPacket, secret: &SharedSecret) -> bool {
    if p.code != Code::AccountingRequest {
        return false;
    }
    match encode_attributes(&p.attributes) {
        Ok(attrs) => compute_accounting_request_authenticator(p.identifier, &attrs, secret) == p.authenticator,
        Err(_) => false,
    }
}

/// Checks a response against the request it answers.
pub fn verify_response(response: &RadiusPacket, request_authenticator: &[u8; 16], secret: &SharedSecret) -> bool {
    match encode_attributes(&response.attributes) {
        Ok(attrs) => {
            compute_response_authenticator(
                response.code,
                response.identifier,
                &attrs,
                request_authenticator,
                secret,
            ) == response.authenticator
        }
        Err(_) => false,
    }
}

/// Builds and encodes a response whose authenticator is computed over the
/// final attribute list.
pub fn encode_response(
    code: Code,
    identifier: u8,
    attributes: Vec<Attribute>,
    request_authenticator: &[u8; 16],
    secret: &SharedSecret,
) -> Result<Vec<u8>, CodecError> {
    let encoded = encode_attributes(&attributes)?;
    let authenticator = compute_response_authenticator(code, identifier, &encoded, request_authenticator, secret);
    encode_packet(&RadiusPacket {
        code,
        identifier,
        authenticator,
        attributes,
    })
}

/// Builds and encodes a signed Accounting-Request (NAS side).
pub fn encode_accounting_request(
    identifier: u8,
    attributes: Vec<Attribute>,
    secret: &SharedSecret,
) -> Result<Vec<u8>, CodecError> {
    let encoded = encode_attributes(&attributes)?;
    let authenticator = compute_accounting_request_authenticator(identifier, &encoded, secret);
    encode_packet(&RadiusPacket {
        code: Code::AccountingRequest,
        identifier,
        authenticator,
        attributes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secret_is_redacted_and_nonempty() {
        assert!(SharedSecret::new("").is_none());
        let s = SharedSecret::new("hunter2").unwrap();
        assert!(!format!("{s:?}").contains("hunter2"));
    }

    #[test]
    fn deterministic_and_secret_sensitive() {
        let s1 = SharedSecret::new("s").unwrap();
        let s2 = SharedSecret::new("t").unwrap();
        let a = compute_response_authenticator(Code::AccessAccept, 0, &[], &[0; 16], &s1);
        let b = compute_response_authenticator(Code::AccessAccept, 0, &[], &[0; 16], &s1);
        let c = compute_response_authenticator(Code::AccessAccept, 0, &[], &[0; 16], &s2);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn accounting_request_signs_and_verifies() {
        let secret = SharedSecret::new("acct-secret").unwrap();
        let attrs = vec![Attribute::integer(40, 1), Attribute::text(44, "sess-1")];
        let bytes = encode_accounting_request(3, attrs, &secret).unwrap();
        let p = super::super::packet::decode_packet(&bytes).unwrap();
        assert!(verify_accounting_request(&p, &secret));
        assert!(!verify_accounting_request(&p, &SharedSecret::new("wrong").unwrap()));
    }
}
