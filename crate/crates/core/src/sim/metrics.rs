use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use serde::Serialize;
use thiserror::Error;

use super::scenario::UseCase;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("assignment covers {assigned} events, ground truth {truth}; the event sets differ")]
pub struct EventSetMismatch {
    pub assigned: usize,
    pub truth: usize,
}

/// Pairwise agreement between a predicted and a true partition.
#[derive(Debug, Copy, Clone, PartialEq, Serialize)]
pub struct Pairwise {
    /// Share of same-identifier event pairs that really are one device.
    pub precision: f64,
    /// Share of same-device event pairs that got one identifier.
    pub recall: f64,
    pub predicted_pairs: u64,
    pub true_pairs: u64,
    pub agreeing_pairs: u64,
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

fn ratio(num: u64, den: u64) -> f64 {
    // With no pairs to judge, there is nothing wrong and nothing missed.
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Pairwise precision and recall of `assignments` against `truth`, both
/// keyed by event. Exact: pair counts come from the contingency table of
/// (identifier, true device) rather than sampling.
pub fn partition_metrics<E, P, T>(
    assignments: &BTreeMap<E, P>,
    truth: &BTreeMap<E, T>,
) -> Result<Pairwise, EventSetMismatch>
where
    E: Ord,
    P: Hash + Eq,
    T: Hash + Eq,
{
    if assignments.len() != truth.len() || !assignments.keys().eq(truth.keys()) {
        return Err(EventSetMismatch {
            assigned: assignments.len(),
            truth: truth.len(),
        });
    }
    let mut by_pred: HashMap<&P, u64> = HashMap::new();
    let mut by_true: HashMap<&T, u64> = HashMap::new();
    let mut by_both: HashMap<(&P, &T), u64> = HashMap::new();
    for ((_, p), (_, t)) in assignments.iter().zip(truth.iter()) {
        *by_pred.entry(p).or_default() += 1;
        *by_true.entry(t).or_default() += 1;
        *by_both.entry((p, t)).or_default() += 1;
    }
    let predicted_pairs: u64 = by_pred.values().map(|n| pairs(*n)).sum();
    let true_pairs: u64 = by_true.values().map(|n| pairs(*n)).sum();
    let agreeing_pairs: u64 = by_both.values().map(|n| pairs(*n)).sum();
    Ok(Pairwise {
        precision: ratio(agreeing_pairs, predicted_pairs),
        recall: ratio(agreeing_pairs, true_pairs),
        predicted_pairs,
        true_pairs,
        agreeing_pairs,
    })
}

/// Per-use-case figures, reported in table order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UseCaseRow {
    pub use_case: UseCase,
    pub label: &'static str,
    pub devices: usize,
    pub authentications: usize,
    pub distinct_macs: usize,
    pub pdids: usize,
    pub precision: f64,
    pub recall: f64,
    /// Repeat authentications that found the device's first identifier.
    /// `None` when no device authenticated twice.
    pub success_rate: Option<f64>,
    pub duplicate_pdids: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub devices: usize,
    pub authentications: usize,
    pub accepts: usize,
    pub rejects: usize,
    pub unanswered: usize,
    pub dhcp_observations: usize,
    pub distinct_macs: usize,
    /// A MAC-keyed system keeps one record per MAC it has seen.
    pub records_without_framework: usize,
    pub records_with_framework: usize,
    pub persistent_pdids: usize,
    pub ephemeral_pdids: usize,
    pub duplicate_pdids: usize,
    pub pairwise_precision: f64,
    pub pairwise_recall: f64,
    pub ambiguity_flags: u64,
    pub pdid_attribute_violations: usize,
    pub authenticator_failures: usize,
    pub session_groups: usize,
    pub legacy_records: usize,
    pub migrations: u64,
    pub use_cases: Vec<UseCaseRow>,
}

/// One authentication as the simulated NAS saw it.
#[derive(Debug, Clone)]
pub struct AuthRecord {
    pub device: usize,
    pub use_case: UseCase,
    pub mac: crate::mac::MacAddress,
    /// Identifier from the Accept, resolved through later folds.
    pub pdid: Option<crate::identity::Pdid>,
}

/// Repeat-authentication success, duplicates and pair scores for one set
/// of authentications.
pub(crate) struct Tally {
    pub pairwise: Pairwise,
    pub success: Option<f64>,
    pub duplicates: usize,
    pub pdids: usize,
}

pub(crate) fn tally<'a>(events: impl Iterator<Item = (usize, &'a AuthRecord)>) -> Tally {
    let mut assign = BTreeMap::new();
    let mut truth = BTreeMap::new();
    let mut first: HashMap<usize, crate::identity::Pdid> = HashMap::new();
    let mut per_device: HashMap<usize, BTreeSet<crate::identity::Pdid>> = HashMap::new();
    let (mut repeats, mut hits) = (0u64, 0u64);
    for (seq, ev) in events {
        let Some(pdid) = ev.pdid else { continue };
        assign.insert(seq, pdid);
        truth.insert(seq, ev.device);
        match first.get(&ev.device) {
            None => {
                first.insert(ev.device, pdid);
            }
            Some(p) => {
                repeats += 1;
                hits += (*p == pdid) as u64;
            }
        }
        if ev.use_case.correlatable() {
            per_device.entry(ev.device).or_default().insert(pdid);
        }
    }
    let pairwise = partition_metrics(&assign, &truth).expect("same keys by construction");
    Tally {
        pairwise,
        success: (repeats > 0).then(|| hits as f64 / repeats as f64),
        duplicates: per_device.values().map(|s| s.len() - 1).sum(),
        pdids: assign.values().collect::<BTreeSet<_>>().len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps(a: &[(u32, &str)], t: &[(u32, &str)]) -> (BTreeMap<u32, String>, BTreeMap<u32, String>) {
        let f = |v: &[(u32, &str)]| v.iter().map(|(k, s)| (*k, s.to_string())).collect();
        (f(a), f(t))
    }

    /// Direct enumeration over all unordered event pairs.
    fn brute(a: &BTreeMap<u32, String>, t: &BTreeMap<u32, String>) -> (f64, f64) {
        let keys: Vec<&u32> = a.keys().collect();
        let (mut same_p, mut same_t, mut both) = (0, 0, 0);
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                let sp = a[keys[i]] == a[keys[j]];
                let st = t[keys[i]] == t[keys[j]];
                same_p += sp as u32;
                same_t += st as u32;
                both += (sp && st) as u32;
            }
        }
        let r = |n: u32, d: u32| if d == 0 { 1.0 } else { n as f64 / d as f64 };
        (r(both, same_p), r(both, same_t))
    }

    #[test]
    fn perfect_assignment() {
        let (a, t) = maps(&[(1, "p"), (2, "p"), (3, "q")], &[(1, "x"), (2, "x"), (3, "y")]);
        let m = partition_metrics(&a, &t).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
    }

    #[test]
    fn singletons_have_full_precision() {
        let (a, t) = maps(&[(1, "p"), (2, "q"), (3, "r")], &[(1, "x"), (2, "x"), (3, "y")]);
        let m = partition_metrics(&a, &t).unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 0.0);
    }

    #[test]
    fn two_devices_merged() {
        // Four events, one identifier: 6 pairs, of which 2 are truly one device.
        let (a, t) = maps(
            &[(1, "p"), (2, "p"), (3, "p"), (4, "p")],
            &[(1, "x"), (2, "x"), (3, "y"), (4, "y")],
        );
        let m = partition_metrics(&a, &t).unwrap();
        assert_eq!((m.predicted_pairs, m.agreeing_pairs), (6, 2));
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn mismatched_event_sets() {
        let (a, t) = maps(&[(1, "p"), (2, "p")], &[(1, "x"), (3, "x")]);
        assert!(partition_metrics(&a, &t).is_err());
    }

    #[test]
    fn agrees_with_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(0..40u32);
            let a: BTreeMap<u32, String> = (0..n).map(|k| (k, rng.gen_range(0..6).to_string())).collect();
            let t: BTreeMap<u32, String> = (0..n).map(|k| (k, rng.gen_range(0..6).to_string())).collect();
            let m = partition_metrics(&a, &t).unwrap();
            let (p, r) = brute(&a, &t);
            assert!((m.precision - p).abs() < 1e-12 && (m.recall - r).abs() < 1e-12);
        }
    }
}
