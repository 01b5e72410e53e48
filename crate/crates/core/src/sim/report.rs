use std::fmt::Write as _;

use serde::Serialize;

use super::metrics::{Metrics, UseCaseRow};
use super::scenario::{Expectation, UseCase};

const SCALARS: &[&str] = &[
    "devices",
    "authentications",
    "accepts",
    "rejects",
    "unanswered",
    "dhcp_observations",
    "distinct_macs",
    "records_without_framework",
    "records_with_framework",
    "persistent_pdids",
    "ephemeral_pdids",
    "duplicate_pdids",
    "pairwise_precision",
    "pairwise_recall",
    "ambiguity_flags",
    "pdid_attribute_violations",
    "authenticator_failures",
    "session_groups",
    "legacy_records",
    "migrations",
];

const ROW_FIELDS: &[&str] = &[
    "devices",
    "authentications",
    "distinct_macs",
    "pdids",
    "precision",
    "recall",
    "success_rate",
    "duplicate_pdids",
];

/// Names usable in a scenario's `expect` block: the scalar metrics, and
/// `<use_case>.<field>` for per-use-case rows.
pub fn is_metric_name(name: &str) -> bool {
    if SCALARS.contains(&name) {
        return true;
    }
    match name.split_once('.') {
        Some((uc, field)) => UseCase::ALL.iter().any(|u| u.key() == uc) && ROW_FIELDS.contains(&field),
        None => false,
    }
}

fn row_value(r: &UseCaseRow, field: &str) -> Option<f64> {
    Some(match field {
        "devices" => r.devices as f64,
        "authentications" => r.authentications as f64,
        "distinct_macs" => r.distinct_macs as f64,
        "pdids" => r.pdids as f64,
        "precision" => r.precision,
        "recall" => r.recall,
        "success_rate" => r.success_rate?,
        "duplicate_pdids" => r.duplicate_pdids as f64,
        _ => return None,
    })
}

/// Value of a named metric, or `None` when the scenario has no such row.
pub fn metric_value(m: &Metrics, name: &str) -> Option<f64> {
    if let Some((uc, field)) = name.split_once('.') {
        let row = m.use_cases.iter().find(|r| r.use_case.key() == uc)?;
        return row_value(row, field);
    }
    Some(match name {
        "devices" => m.devices as f64,
        "authentications" => m.authentications as f64,
        "accepts" => m.accepts as f64,
        "rejects" => m.rejects as f64,
        "unanswered" => m.unanswered as f64,
        "dhcp_observations" => m.dhcp_observations as f64,
        "distinct_macs" => m.distinct_macs as f64,
        "records_without_framework" => m.records_without_framework as f64,
        "records_with_framework" => m.records_with_framework as f64,
        "persistent_pdids" => m.persistent_pdids as f64,
        "ephemeral_pdids" => m.ephemeral_pdids as f64,
        "duplicate_pdids" => m.duplicate_pdids as f64,
        "pairwise_precision" => m.pairwise_precision,
        "pairwise_recall" => m.pairwise_recall,
        "ambiguity_flags" => m.ambiguity_flags as f64,
        "pdid_attribute_violations" => m.pdid_attribute_violations as f64,
        "authenticator_failures" => m.authenticator_failures as f64,
        "session_groups" => m.session_groups as f64,
        "legacy_records" => m.legacy_records as f64,
        "migrations" => m.migrations as f64,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectResult {
    pub metric: String,
    pub expected: Expectation,
    pub actual: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub metrics: Metrics,
    pub expectations: Vec<ExpectResult>,
    pub passed: bool,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

impl Report {
    pub fn new(
        scenario: &str,
        seed: u64,
        metrics: Metrics,
        expect: &std::collections::BTreeMap<String, Expectation>,
    ) -> Self {
        let expectations: Vec<ExpectResult> = expect
            .iter()
            .map(|(name, e)| {
                let actual = metric_value(&metrics, name);
                ExpectResult {
                    metric: name.clone(),
                    expected: e.clone(),
                    actual,
                    pass: actual.is_some_and(|v| e.holds(v)),
                }
            })
            .collect();
        let passed = expectations.iter().all(|e| e.pass);
        Report {
            scenario: scenario.to_string(),
            seed,
            metrics,
            expectations,
            passed,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Text => self.to_text(),
        }
    }

    fn to_text(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} (seed {})", self.scenario, self.seed);
        let _ = writeln!(
            s,
            "devices {}, authentications {} ({} accepted, {} rejected, {} unanswered), dhcp observations {}",
            m.devices, m.authentications, m.accepts, m.rejects, m.unanswered, m.dhcp_observations
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "device records without framework (one per MAC): {}", m.records_without_framework);
        let _ = writeln!(s, "device records with framework (persistent PDIDs): {}", m.records_with_framework);
        let _ = writeln!(s, "without: {}, with: {}", m.records_without_framework, m.records_with_framework);
        let _ = writeln!(s, "ephemeral records: {}", m.ephemeral_pdids);
        let _ = writeln!(s, "duplicate PDIDs: {}", m.duplicate_pdids);
        let _ = writeln!(
            s,
            "pairwise precision {:.4}, recall {:.4}",
            m.pairwise_precision, m.pairwise_recall
        );
        let _ = writeln!(s, "ambiguity flags: {}", m.ambiguity_flags);
        let _ = writeln!(s, "session groups: {}", m.session_groups);
        if m.legacy_records > 0 || m.migrations > 0 {
            let _ = writeln!(s, "legacy records: {}, migrated: {}", m.legacy_records, m.migrations);
        }
        if m.pdid_attribute_violations > 0 || m.authenticator_failures > 0 {
            let _ = writeln!(
                s,
                "protocol problems: {} PDID attribute, {} authenticator",
                m.pdid_attribute_violations, m.authenticator_failures
            );
        }
        if !m.use_cases.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "{:<20} {:>7} {:>6} {:>6} {:>6} {:>9} {:>7} {:>8} {:>5}",
                "use case", "devices", "auths", "macs", "pdids", "precision", "recall", "success", "dups"
            );
            for r in &m.use_cases {
                let success = r.success_rate.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
                let _ = writeln!(
                    s,
                    "{:<20} {:>7} {:>6} {:>6} {:>6} {:>9.4} {:>7.4} {:>8} {:>5}",
                    r.label,
                    r.devices,
                    r.authentications,
                    r.distinct_macs,
                    r.pdids,
                    r.precision,
                    r.recall,
                    success,
                    r.duplicate_pdids
                );
            }
        }
        if !self.expectations.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "expectations:");
            for e in &self.expectations {
                let actual = e.actual.map_or_else(|| "missing".to_string(), |v| format!("{v}"));
                let verdict = if e.pass { "ok" } else { "FAILED" };
                let _ = writeln!(s, "  {} {} (got {}): {}", e.metric, e.expected, actual, verdict);
            }
        }
        let _ = writeln!(s, "result: {}", if self.passed { "pass" } else { "fail" });
        s
    }
}
