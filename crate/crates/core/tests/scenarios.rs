use std::path::PathBuf;

use pdid::sim::{run_scenario, Format, Scenario, SimOptions, TransportKind};

fn bundled() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    v.sort();
    v
}

#[test]
fn every_bundled_scenario_meets_its_expectations() {
    let files = bundled();
    assert!(files.len() >= 8);
    for path in files {
        let s = Scenario::load(&path).unwrap();
        let report = run_scenario(&s, SimOptions::default()).unwrap().report;
        assert!(report.passed, "{}:\n{}", path.display(), report.render(Format::Text));
        assert_eq!(report.metrics.authenticator_failures, 0, "{}", path.display());
        assert_eq!(report.metrics.pdid_attribute_violations, 0, "{}", path.display());
    }
}

#[test]
fn json_report_is_byte_identical_across_runs() {
    for path in bundled() {
        let s = Scenario::load(&path).unwrap();
        let a = run_scenario(&s, SimOptions::default()).unwrap().report.render(Format::Json);
        let b = run_scenario(&s, SimOptions::default()).unwrap().report.render(Format::Json);
        assert_eq!(a, b, "{}", path.display());
    }
}

#[test]
fn udp_transport_matches_loopback_counts() {
    let s = Scenario::from_json(
        r#"{"name": "udp", "seed": 12,
            "devices": [{"id": "byod", "count": 5, "use_case": "byod_cert"},
                        {"id": "mdm", "count": 5, "use_case": "managed"}],
            "schedule": [{"at": 0, "event": "connect", "devices": ["*"], "repeat": 3, "interval": 60}]}"#,
    )
    .unwrap();
    let lo = run_scenario(&s, SimOptions::default()).unwrap().report.metrics;
    let udp = run_scenario(
        &s,
        SimOptions {
            transport: TransportKind::Udp,
            ..SimOptions::default()
        },
    )
    .unwrap()
    .report
    .metrics;
    assert_eq!(udp.unanswered, 0);
    assert_eq!(udp.authenticator_failures, 0);
    assert_eq!(
        (udp.persistent_pdids, udp.distinct_macs, udp.pairwise_precision, udp.pairwise_recall),
        (lo.persistent_pdids, lo.distinct_macs, lo.pairwise_precision, lo.pairwise_recall)
    );
}

#[test]
fn text_report_states_both_counts() {
    let s = Scenario::load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/byod_100x10.json")).unwrap();
    let text = run_scenario(&s, SimOptions::default()).unwrap().report.render(Format::Text);
    assert!(text.contains("without: 1000, with: 100"), "{text}");
}
