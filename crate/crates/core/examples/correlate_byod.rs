//! A laptop rotates its MAC on every connection; the certificate keeps it one device.

use std::sync::Arc;

use pdid::correlator::{Correlator, CorrelatorConfig, IdentitySignalSet};
use pdid::identity::{IdentityStore, NetworkContext, StoreConfig};
use pdid::time::Timestamp;

fn main() {
    let store = Arc::new(IdentityStore::new(StoreConfig::default()).unwrap());
    let correlator = Correlator::with_seed(Arc::clone(&store), CorrelatorConfig::default(), 1);
    let ctx = NetworkContext::new("sw1", "Gi1/0/3");

    for (i, mac) in ["02:1a:00:00:00:01", "06:7f:10:20:30:40", "0a:55:aa:55:aa:01"].iter().enumerate() {
        let signals = IdentitySignalSet {
            cert_id: Some("CN=alice-laptop,O=corp.example".into()),
            username: Some("alice@corp.example".into()),
            mac: Some(mac.parse().unwrap()),
            ..Default::default()
        };
        let r = correlator.correlate_in(&signals, Some(&ctx), Timestamp(i as u64 * 3600)).unwrap();
        println!("{mac} -> {} (matched by {}, confidence {})", r.pdid, r.matched_by, r.confidence);
    }
    let count = store.license_count();
    println!("macs seen: {}, persistent devices: {}", store.mac_count(), count.persistent);
}
