//! Bind the service on loopback, send one Access-Request over UDP, and stop.

use std::net::{IpAddr, UdpSocket};
use std::sync::Arc;
use std::time::Duration;

use pdid::radius::{attr, decode_packet, encode_packet, encode_vsa, find_pdids, verify_response, Attribute, Code, RadiusPacket, SharedSecret, VendorType};
use pdid::service::{AuthService, NasClient, ServerConfig};

fn main() -> std::io::Result<()> {
    let lo = IpAddr::from([127, 0, 0, 1]);
    let secret = SharedSecret::new("testing123").unwrap();
    let config = ServerConfig {
        bind_address: lo,
        auth_port: 0,
        acct_port: 0,
        nas_clients: vec![NasClient { name: "lab".into(), address: lo, secret: secret.clone() }],
        ..ServerConfig::default()
    };
    let service = Arc::new(AuthService::from_config(config).unwrap());
    let server = service.bind_udp()?;
    println!("listening on {} (auth) and {} (acct)", server.auth_addr(), server.acct_addr());

    let request = RadiusPacket::new(Code::AccessRequest, 7, *b"fedcba9876543210")
        .with_attribute(Attribute::text(attr::CALLING_STATION_ID, "02:aa:bb:cc:dd:ee"))
        .with_attribute(encode_vsa(VendorType::MdmEnrollment, b"mdm-7781").unwrap());
    let sock = UdpSocket::bind((lo, 0))?;
    sock.set_read_timeout(Some(Duration::from_secs(2)))?;
    sock.send_to(&encode_packet(&request).unwrap(), server.auth_addr())?;
    let mut buf = [0u8; 4096];
    let (n, _) = sock.recv_from(&mut buf)?;
    let reply = decode_packet(&buf[..n]).unwrap();
    println!(
        "{:?}, verified: {}, pdid: {}",
        reply.code,
        verify_response(&reply, &request.authenticator, &secret),
        find_pdids(&reply.attributes)[0]
    );
    server.stop();
    Ok(())
}
