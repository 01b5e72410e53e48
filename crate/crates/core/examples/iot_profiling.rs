//! A headless device authenticates by MAC only, then shows up in DHCP. After
//! it reconnects with a new randomized MAC, its DHCP fingerprint plus the
//! switch port it sits on bring the new MAC back to the same identifier.

use std::sync::Arc;

use pdid::correlator::{Correlator, CorrelatorConfig};
use pdid::identity::{IdentityStore, NetworkContext, ObservationKind, StoreConfig};
use pdid::mac::MacAddress;
use pdid::profiler::{Observation, Profiler};
use pdid::time::Timestamp;

fn mab(mac: MacAddress, ctx: &NetworkContext, t: u64) -> Observation {
    Observation::new(ObservationKind::RadiusMab, mac, ctx.clone(), Timestamp(t)).with("auth_method", "mab")
}

fn dhcp(mac: MacAddress, ctx: &NetworkContext, t: u64) -> Observation {
    Observation::new(ObservationKind::Dhcp, mac, ctx.clone(), Timestamp(t))
        .with("dhcp_option_list", "1,3,6,15,119,252")
        .with("dhcp_vendor_class", "MedPump-X 3.2")
        .with("hostname", "pump-ward4-07")
}

fn main() {
    let store = Arc::new(IdentityStore::new(StoreConfig::default()).unwrap());
    let correlator = Arc::new(Correlator::with_seed(store, CorrelatorConfig::default(), 4));
    let profiler = Profiler::new(correlator, Profiler::DEFAULT_WINDOW);
    let port = NetworkContext::new("ward4-sw", "Gi1/0/7");
    let (m1, m2): (MacAddress, MacAddress) = ("02:3c:00:00:00:01".parse().unwrap(), "06:3c:00:00:00:02".parse().unwrap());

    let steps = [mab(m1, &port, 0), dhcp(m1, &port, 8), mab(m2, &port, 86_400), dhcp(m2, &port, 86_409)];
    let mut last = None;
    for obs in &steps {
        let out = profiler.ingest(obs).unwrap();
        println!("{:<11} {} -> {} via {:?}", format!("{:?}", obs.kind), obs.mac, out.pdid, out.path);
        last = Some(out.pdid);
    }

    let store = profiler.store();
    let rec = store.get(last.unwrap()).unwrap();
    println!("devices: {}, macs on record: {}", store.license_count().persistent, rec.macs.len());
    for (k, v) in &rec.profile {
        println!("  {k} = {}", v.value);
    }
}
