//! Many first-contact requests for one device arrive at once. Exactly one
//! identifier gets created; everyone else finds it.

use std::collections::BTreeSet;
use std::sync::{Arc, Barrier};
use std::thread;

use pdid::correlator::{Correlator, CorrelatorConfig, IdentitySignalSet};
use pdid::identity::{IdentityStore, StoreConfig};
use pdid::time::Timestamp;

fn main() {
    let store = Arc::new(IdentityStore::new(StoreConfig::default()).unwrap());
    let correlator = Arc::new(Correlator::new(Arc::clone(&store), CorrelatorConfig::default()));
    let n = 64;
    let gate = Arc::new(Barrier::new(n));
    let handles: Vec<_> = (0..n)
        .map(|i| {
            let (c, gate) = (Arc::clone(&correlator), Arc::clone(&gate));
            thread::spawn(move || {
                let signals = IdentitySignalSet {
                    cert_id: Some("CN=shared-device".into()),
                    mac: Some(format!("02:00:00:00:{:02x}:{:02x}", i / 256, i % 256).parse().unwrap()),
                    ..Default::default()
                };
                gate.wait();
                c.correlate(&signals, Timestamp(1)).unwrap().pdid
            })
        })
        .collect();
    let pdids: BTreeSet<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let stats = correlator.guard_stats();
    println!("requests: {n}, distinct identifiers: {}, records: {}", pdids.len(), store.len());
    println!("guard: {stats:?}");
}
