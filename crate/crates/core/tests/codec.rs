mod common;

use common::md5::hex;
use common::{any_attribute, any_packet, oracle_response_authenticator};
use pdid::identity::Pdid;
use pdid::radius::{
    compute_accounting_request_authenticator, compute_response_authenticator, decode_packet, decode_pdid_attribute,
    encode_accounting_request, encode_attributes, encode_packet, encode_pdid_attribute, encode_response, find_pdids,
    verify_accounting_request, verify_response, Code, CodecError, SharedSecret, MAX_PACKET_LEN,
};
use proptest::prelude::*;

#[test]
fn oracle_matches_rfc1321_suite() {
    let cases = [
        ("", "d41d8cd98f00b204e9800998ecf8427e"),
        ("a", "0cc175b9c0f1b6a831c399e269772661"),
        ("abc", "900150983cd24fb0d6963f7d28e17f72"),
        ("message digest", "f96b697d7cb7938d525a2f31aaf161d0"),
        ("abcdefghijklmnopqrstuvwxyz", "c3fcd3d76192e4007dfb496cca67e13b"),
        (
            "12345678901234567890123456789012345678901234567890123456789012345678901234567890",
            "57edf4a22be3c955ac49da2e2107b67a",
        ),
    ];
    for (input, want) in cases {
        assert_eq!(hex(&common::md5::md5(input.as_bytes())), want, "{input:?}");
    }
}

#[test]
fn golden_response_authenticator() {
    let secret = SharedSecret::new("s").unwrap();
    let auth = compute_response_authenticator(Code::AccessAccept, 0, &[], &[0; 16], &secret);
    assert_eq!(hex(&auth), "04f198992afccb877727981ffcd2d58d");
    assert_eq!(auth, oracle_response_authenticator(2, 0, &[], &[0; 16], b"s"));
}

#[test]
fn rejects_bad_framing() {
    assert!(matches!(decode_packet(&[1, 0, 0]), Err(CodecError::TooShort(3))));
    let mut p = encode_packet(&pdid::radius::RadiusPacket::new(Code::AccessRequest, 1, [0; 16])).unwrap();
    p.push(0);
    assert!(decode_packet(&p).is_err(), "trailing octet");
    let mut bad_code = vec![9, 0, 0, 20];
    bad_code.extend_from_slice(&[0; 16]);
    assert!(matches!(decode_packet(&bad_code), Err(CodecError::UnknownCode(9))));
    let mut short_attr = vec![1, 0, 0, 22];
    short_attr.extend_from_slice(&[0; 16]);
    short_attr.extend_from_slice(&[1, 1]);
    assert!(decode_packet(&short_attr).is_err(), "attribute length below 2");
}

#[test]
fn oversize_is_refused() {
    let mut p = pdid::radius::RadiusPacket::new(Code::AccessAccept, 1, [0; 16]);
    p.attributes = (0..17).map(|_| pdid::radius::Attribute::new(18, vec![b'x'; 253])).collect();
    assert!(p.encoded_len() > MAX_PACKET_LEN);
    assert!(matches!(encode_packet(&p), Err(CodecError::Oversize(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn decode_inverts_encode(p in any_packet()) {
        let wire = encode_packet(&p).unwrap();
        prop_assert_eq!(wire.len(), p.encoded_len());
        prop_assert_eq!(decode_packet(&wire).unwrap(), p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn response_authenticator_matches_oracle(
        code in prop::sample::select(vec![Code::AccessAccept, Code::AccessReject, Code::AccountingResponse]),
        id in any::<u8>(),
        request_auth in any::<[u8; 16]>(),
        attrs in prop::collection::vec(any_attribute(), 0..8),
        secret in prop::collection::vec(any::<u8>(), 1..48),
    ) {
        let s = SharedSecret::new(secret.clone()).unwrap();
        let encoded = encode_attributes(&attrs).unwrap();
        let want = oracle_response_authenticator(code as u8, id, &encoded, &request_auth, &secret);
        prop_assert_eq!(compute_response_authenticator(code, id, &encoded, &request_auth, &s), want);

        let wire = encode_response(code, id, attrs, &request_auth, &s).unwrap();
        prop_assert_eq!(&wire[4..20], &want[..]);
        let decoded = decode_packet(&wire).unwrap();
        prop_assert!(verify_response(&decoded, &request_auth, &s));
        let mut flipped = request_auth;
        flipped[0] ^= 0x80;
        prop_assert!(!verify_response(&decoded, &flipped, &s));
    }

    #[test]
    fn accounting_request_authenticator_matches_oracle(
        id in any::<u8>(),
        attrs in prop::collection::vec(any_attribute(), 0..8),
        secret in prop::collection::vec(any::<u8>(), 1..48),
    ) {
        let s = SharedSecret::new(secret.clone()).unwrap();
        let encoded = encode_attributes(&attrs).unwrap();
        let want = oracle_response_authenticator(4, id, &encoded, &[0; 16], &secret);
        prop_assert_eq!(compute_accounting_request_authenticator(id, &encoded, &s), want);
        let decoded = decode_packet(&encode_accounting_request(id, attrs, &s).unwrap()).unwrap();
        prop_assert!(verify_accounting_request(&decoded, &s));
    }

    #[test]
    fn pdid_attribute_round_trips(bytes in any::<[u8; 16]>()) {
        let pdid = Pdid::from_uuid(uuid::Builder::from_random_bytes(bytes).into_uuid()).unwrap();
        let a = encode_pdid_attribute(pdid);
        prop_assert_eq!(decode_pdid_attribute(&a), Some(pdid));
        prop_assert_eq!(find_pdids(&[a]), vec![pdid]);
    }
}
