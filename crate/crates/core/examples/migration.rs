//! Start with the feature off, so records are keyed by MAC as before. Turn
//! it on and authenticate once: the MAC's history moves onto a new identifier.

use std::net::{IpAddr, SocketAddr};

use pdid::radius::{attr, decode_packet, encode_packet, encode_vsa, find_pdids, Attribute, Code, RadiusPacket, SharedSecret, VendorType};
use pdid::service::{AuthService, NasClient, ServerConfig};
use pdid::time::Timestamp;

fn request(id: u8, mac: &str, serial: &str) -> Vec<u8> {
    let p = RadiusPacket::new(Code::AccessRequest, id, [id; 16])
        .with_attribute(Attribute::text(attr::CALLING_STATION_ID, mac))
        .with_attribute(encode_vsa(VendorType::AgentId, serial.as_bytes()).unwrap())
        .with_attribute(encode_vsa(VendorType::DeviceAttribute, b"os=Windows 11").unwrap())
        .with_attribute(encode_vsa(VendorType::DeviceAttribute, b"owner=finance").unwrap());
    encode_packet(&p).unwrap()
}

fn main() {
    let nas = IpAddr::from([192, 0, 2, 1]);
    let config = ServerConfig {
        nas_clients: vec![NasClient { name: "sw1".into(), address: nas, secret: SharedSecret::new("s3cret").unwrap() }],
        ..ServerConfig::default()
    };
    let service = AuthService::from_config(config).unwrap();
    let from = SocketAddr::new(nas, 1645);
    let store = service.store();

    store.set_feature_enabled(false);
    for (i, mac) in ["00:1b:63:00:00:01", "00:1b:63:00:00:02"].iter().enumerate() {
        service.handle_datagram(&request(i as u8, mac, &format!("agent-{i}")), from, Timestamp(100)).unwrap();
    }
    println!("legacy MAC-keyed records: {}", store.legacy_count());

    store.set_feature_enabled(true);
    for (i, mac) in ["00:1b:63:00:00:01", "00:1b:63:00:00:02"].iter().enumerate() {
        let raw = service.handle_datagram(&request(10 + i as u8, mac, &format!("agent-{i}")), from, Timestamp(200)).unwrap();
        let pdid = find_pdids(&decode_packet(&raw).unwrap().attributes)[0];
        let rec = store.get(pdid).unwrap();
        println!("{mac} -> {pdid}: os={:?} owner={:?}", rec.profile_value("os"), rec.profile_value("owner"));
    }
    println!("legacy left: {}, migrations: {}", store.legacy_count(), service.stats().migrations);
}
