//! Identifiers survive a restart: save the store, load it back, and the
//! same certificate still maps to the same identifier.

use std::sync::Arc;

use pdid::correlator::{Correlator, CorrelatorConfig, IdentitySignalSet};
use pdid::identity::{AuditLog, IdentityStore, StoreConfig};
use pdid::mac::OuiRegistry;
use pdid::time::Timestamp;

fn signals(mac: &str) -> IdentitySignalSet {
    IdentitySignalSet {
        cert_id: Some("CN=bob-phone".into()),
        mac: Some(mac.parse().unwrap()),
        ..Default::default()
    }
}

fn main() {
    let dir = std::env::temp_dir().join(format!("pdid-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("store.snap");

    let store = Arc::new(IdentityStore::new(StoreConfig::default()).unwrap());
    let before = Correlator::new(Arc::clone(&store), CorrelatorConfig::default())
        .correlate(&signals("02:00:00:00:00:01"), Timestamp(1_000))
        .unwrap()
        .pdid;
    store.save_snapshot(&path).unwrap();
    println!("saved {} record(s), {} bytes", store.len(), std::fs::metadata(&path).unwrap().len());

    let restored = IdentityStore::load_snapshot(
        &path,
        StoreConfig::default(),
        Arc::new(OuiRegistry::bundled()),
        Arc::new(AuditLog::new()),
    )
    .unwrap();
    let after = Correlator::new(Arc::new(restored), CorrelatorConfig::default())
        .correlate(&signals("06:00:00:00:00:02"), Timestamp(2_000))
        .unwrap();
    println!("before: {before}\nafter:  {} ({})", after.pdid, after.matched_by);
    std::fs::remove_dir_all(&dir).unwrap();
}
