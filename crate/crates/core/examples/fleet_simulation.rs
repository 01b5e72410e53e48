//! Run a bundled scenario in-process and print its report.
//!
//! cargo run --example fleet_simulation -- crates/core/scenarios/mixed.json

use pdid::sim::{run_scenario, Format, Scenario, SimOptions};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/byod_100x10.json").to_string());
    let scenario = Scenario::load(&path).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(2);
    });
    let outcome = run_scenario(&scenario, SimOptions::default()).unwrap();
    print!("{}", outcome.report.render(Format::Text));
}
