//! Classify devices from profile attributes and manufacturer prefix. A
//! randomized MAC says nothing about the vendor; a burned-in one does.

use pdid::identity::{AttributeSource, IdentityStore, NewRecord, ObservationKind, StoreConfig};
use pdid::mac::{oui_vendor, MacAddress};
use pdid::profiler::{classify, default_rules};
use pdid::time::Timestamp;

fn main() {
    let store = IdentityStore::new(StoreConfig::default()).unwrap();
    let rules = default_rules();
    let devices: [(&str, &[(&str, &str)]); 3] = [
        ("00:40:8c:12:34:56", &[("dhcp_vendor_class", "AxisCam M3045")]),
        ("02:77:00:00:00:01", &[("dhcp_vendor_class", "android-dhcp-14")]),
        ("06:77:00:00:00:02", &[]),
    ];
    for (i, (mac, attrs)) in devices.iter().enumerate() {
        let mac: MacAddress = mac.parse().unwrap();
        let pdid = format!("00000000-0000-4000-8000-{:012x}", i + 1).parse().unwrap();
        store.insert_new(pdid, NewRecord { mac: Some(mac), ..Default::default() }, Timestamp(0));
        let map = attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let rec = store
            .merge_attributes(pdid, &map, AttributeSource::Observation(ObservationKind::Dhcp), Timestamp(1))
            .unwrap();
        println!(
            "{mac}  randomized={:<5} vendor={:<28} class={}",
            mac.is_locally_administered(),
            oui_vendor(&mac, store.registry()).unwrap_or("-"),
            classify(&rec, &rules, store.registry()).unwrap_or_else(|| "unclassified".into())
        );
    }
}
