//! Build an Access-Request, answer it, and check the reply the way a NAS would.

use pdid::identity::generate_pdid;
use pdid::radius::{
    attr, decode_packet, encode_packet, encode_pdid_attribute, encode_response, encode_vsa, find_pdids,
    verify_response, Attribute, Code, RadiusPacket, SharedSecret, VendorType,
};

fn main() {
    let secret = SharedSecret::new("testing123").unwrap();
    let request = RadiusPacket::new(Code::AccessRequest, 42, *b"0123456789abcdef")
        .with_attribute(Attribute::text(attr::USER_NAME, "alice@corp.example"))
        .with_attribute(Attribute::text(attr::CALLING_STATION_ID, "02-11-22-33-44-55"))
        .with_attribute(encode_vsa(VendorType::CertificateIdentity, b"CN=alice-laptop").unwrap());
    let wire = encode_packet(&request).unwrap();
    println!("request: {} octets", wire.len());
    assert_eq!(decode_packet(&wire).unwrap(), request);

    let pdid = generate_pdid(&mut rand::rngs::OsRng).unwrap();
    let reply = encode_response(
        Code::AccessAccept,
        request.identifier,
        vec![encode_pdid_attribute(pdid)],
        &request.authenticator,
        &secret,
    )
    .unwrap();
    let decoded = decode_packet(&reply).unwrap();
    println!("reply: {:?}, authenticator ok: {}", decoded.code, verify_response(&decoded, &request.authenticator, &secret));
    println!("pdid carried: {}", find_pdids(&decoded.attributes)[0]);

    let wrong = SharedSecret::new("not-the-secret").unwrap();
    println!("with the wrong secret: {}", verify_response(&decoded, &request.authenticator, &wrong));
}
