//! Observation ingest, behavioral fingerprints, cross-MAC merging and
//! classification.

mod classify;
mod fingerprint;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classify, default_rules, glob_match, score, ClassificationRule, BEHAVIOR_WEIGHT, OUI_WEIGHT};
pub use fingerprint::{fingerprint_attrs, user_agent_family, FINGERPRINT_ATTRIBUTES};

use crate::correlator::{CorrelateError, Correlator, IdentitySignalSet, MatchedBy, UseCaseHint};
use crate::identity::{
    AttributeSource, AuditOp, DeviceRecord, Fingerprint, IdentityStore, NetworkContext, NewRecord, ObservationKind, Pdid,
    StoreError,
};
use crate::mac::MacAddress;
use crate::time::Timestamp;

pub use crate::mac::oui_vendor;

const ACTOR: &str = "profiler";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: ObservationKind,
    pub mac: MacAddress,
    pub context: NetworkContext,
    pub t: Timestamp,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
}

impl Observation {
    pub fn new(kind: ObservationKind, mac: MacAddress, context: NetworkContext, t: Timestamp) -> Self {
        Observation {
            kind,
            mac,
            context,
            t,
            attrs: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.attrs.insert(key.to_string(), value.to_string());
        self
    }
}

/// Fingerprint of an observation. DNS and SNMP observations are merged as
/// opaque attributes but never fingerprinted.
pub fn fingerprint(obs: &Observation) -> Option<Fingerprint> {
    match obs.kind {
        ObservationKind::Dns | ObservationKind::Snmp => None,
        _ => fingerprint_attrs(&obs.attrs),
    }
}

/// How an observation found its record.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePath {
    Mac,
    Context,
    Fingerprint,
    /// A provisional record was folded into the device it turned out to be.
    Folded,
    New,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub pdid: Pdid,
    pub path: MergePath,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    /// The fingerprint matched existing devices with nothing to break the
    /// tie. The observation was attached to the flagged record `pdid`.
    #[error("fingerprint matches {candidates} device(s) without corroboration; kept on flagged record {pdid}")]
    AmbiguousFingerprint { pdid: Pdid, candidates: usize },
    #[error("{kind:?} observation lacks required attribute {missing}")]
    InvalidObservation { kind: ObservationKind, missing: &'static str },
    #[error(transparent)]
    Correlate(#[from] CorrelateError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Result of looking a fingerprint up among existing devices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FingerprintMatch {
    Unmatched,
    /// Exactly one device has this fingerprint and was seen in this context.
    Matched(Pdid),
    Ambiguous(usize),
}

pub struct Profiler {
    correlator: Arc<Correlator>,
    window: Duration,
    recent: Mutex<HashMap<NetworkContext, (Pdid, Timestamp)>>,
    ambiguity_flags: AtomicU64,
}

impl Profiler {
    pub const DEFAULT_WINDOW: Duration = Duration::from_secs(120);

    pub fn new(correlator: Arc<Correlator>, window: Duration) -> Self {
        Profiler {
            correlator,
            window,
            recent: Mutex::new(HashMap::new()),
            ambiguity_flags: AtomicU64::new(0),
        }
    }

    pub fn store(&self) -> &Arc<IdentityStore> {
        self.correlator.store()
    }

    pub fn window(&self) -> Duration {
        self.window
    }

    /// Observations left on flagged records because their fingerprint was ambiguous.
    pub fn ambiguity_flags(&self) -> u64 {
        self.ambiguity_flags.load(Ordering::Relaxed)
    }

    /// Fingerprint holders other than `exclude`. A match needs a single
    /// holder previously seen in `context`; shared fingerprints without that
    /// corroboration stay ambiguous.
    pub fn resolve_fingerprint(&self, fp: &Fingerprint, context: &NetworkContext, exclude: Option<Pdid>) -> FingerprintMatch {
        let candidates: Vec<DeviceRecord> = self
            .store()
            .fingerprint_candidates(fp)
            .into_iter()
            .filter(|r| Some(r.pdid) != exclude)
            .collect();
        if candidates.is_empty() {
            return FingerprintMatch::Unmatched;
        }
        let corroborated: Vec<&DeviceRecord> = candidates.iter().filter(|r| r.seen_in(context)).collect();
        match corroborated.as_slice() {
            [one] => FingerprintMatch::Matched(one.pdid),
            _ => FingerprintMatch::Ambiguous(candidates.len()),
        }
    }

    fn check(obs: &Observation) -> Result<(), ProfileError> {
        if obs.kind == ObservationKind::Dhcp && !obs.attrs.contains_key("dhcp_option_list") {
            return Err(ProfileError::InvalidObservation {
                kind: obs.kind,
                missing: "dhcp_option_list",
            });
        }
        if obs.kind == ObservationKind::HttpUserAgent && !obs.attrs.contains_key("user_agent") {
            return Err(ProfileError::InvalidObservation {
                kind: obs.kind,
                missing: "user_agent",
            });
        }
        Ok(())
    }

    fn context_hit(&self, obs: &Observation) -> Option<Pdid> {
        let (pdid, seen) = *self.recent.lock().get(&obs.context)?;
        if obs.t < seen || obs.t.since(seen) > self.window.as_secs() {
            return None;
        }
        self.store().get(pdid).filter(|r| !r.ephemeral).map(|r| r.pdid)
    }

    fn flag(&self, pdid: Pdid, candidates: usize, t: Timestamp) {
        self.ambiguity_flags.fetch_add(1, Ordering::Relaxed);
        self.store().audit().record(
            t,
            AuditOp::AmbiguousFingerprint,
            Some(pdid),
            ACTOR,
            format!("{candidates} candidate(s)"),
        );
    }

    /// Resolves an observation to a device, in order: the MAC's current
    /// record; a device resolved in the same network context within the
    /// window; a corroborated fingerprint match; otherwise a new device.
    pub fn ingest(&self, obs: &Observation) -> Result<IngestOutcome, ProfileError> {
        Self::check(obs)?;
        let store = Arc::clone(self.store());
        let fp = fingerprint(obs);
        let t = obs.t;

        let (pdid, path) = if let Some(rec) = store.lookup_by_mac(&obs.mac) {
            match (&fp, rec.provisional) {
                (Some(fp), true) => match self.resolve_fingerprint(fp, &obs.context, Some(rec.pdid)) {
                    FingerprintMatch::Matched(target) => {
                        let merged = store.fold(rec.pdid, target, t, ACTOR)?;
                        (merged.pdid, MergePath::Folded)
                    }
                    FingerprintMatch::Unmatched => {
                        let _ = store.set_provisional(rec.pdid, false);
                        (rec.pdid, MergePath::Mac)
                    }
                    FingerprintMatch::Ambiguous(n) => {
                        // Keep it as its own device, but say so.
                        let _ = store.set_provisional(rec.pdid, false);
                        let _ = store.flag(rec.pdid, false);
                        self.finish(obs, rec.pdid, Some(fp), false);
                        self.flag(rec.pdid, n, t);
                        return Err(ProfileError::AmbiguousFingerprint {
                            pdid: rec.pdid,
                            candidates: n,
                        });
                    }
                },
                _ => (rec.pdid, MergePath::Mac),
            }
        } else if let Some(pdid) = self.context_hit(obs) {
            let _ = store.associate_mac(pdid, obs.mac, t);
            (pdid, MergePath::Context)
        } else {
            let by_fp = match &fp {
                Some(fp) => self.resolve_fingerprint(fp, &obs.context, None),
                None => FingerprintMatch::Unmatched,
            };
            match by_fp {
                FingerprintMatch::Matched(pdid) => {
                    let _ = store.associate_mac(pdid, obs.mac, t);
                    (pdid, MergePath::Fingerprint)
                }
                FingerprintMatch::Ambiguous(n) => {
                    let rec = self.correlator.create_record(
                        NewRecord {
                            mac: Some(obs.mac),
                            ephemeral: true,
                            context: Some(obs.context.clone()),
                            ..NewRecord::default()
                        },
                        t,
                    )?;
                    let _ = store.flag(rec.pdid, true);
                    self.finish(obs, rec.pdid, None, false);
                    self.flag(rec.pdid, n, t);
                    return Err(ProfileError::AmbiguousFingerprint {
                        pdid: rec.pdid,
                        candidates: n,
                    });
                }
                FingerprintMatch::Unmatched => {
                    let signals = IdentitySignalSet {
                        mac: Some(obs.mac),
                        fingerprint: fp.clone(),
                        use_case_hint: (obs.kind == ObservationKind::RadiusMab).then_some(UseCaseHint::Mab),
                        ..IdentitySignalSet::default()
                    };
                    let r = self.correlator.correlate_in(&signals, Some(&obs.context), t)?;
                    let created = r.matched_by == MatchedBy::New;
                    if created && fp.is_none() && obs.mac.is_locally_administered() {
                        // A bare MAB on a randomized MAC: no evidence yet of which device this is.
                        let _ = store.set_provisional(r.pdid, true);
                    }
                    (r.pdid, if created { MergePath::New } else { MergePath::Mac })
                }
            }
        };
        self.finish(obs, pdid, fp.as_ref(), true);
        Ok(IngestOutcome { pdid, path })
    }

    fn finish(&self, obs: &Observation, pdid: Pdid, fp: Option<&Fingerprint>, remember: bool) {
        let store = self.store();
        let _ = store.merge_attributes(pdid, &obs.attrs, AttributeSource::Observation(obs.kind), obs.t);
        let _ = store.note_context(pdid, &obs.context, obs.t);
        if let Some(fp) = fp {
            let _ = store.add_fingerprint(pdid, fp, obs.t);
        }
        if remember {
            let mut recent = self.recent.lock();
            let slot = recent.entry(obs.context.clone()).or_insert((pdid, obs.t));
            if obs.t >= slot.1 {
                *slot = (pdid, obs.t);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::CorrelatorConfig;
    use crate::identity::StoreConfig;

    fn profiler() -> Profiler {
        let store = Arc::new(IdentityStore::new(StoreConfig::default()).unwrap());
        let c = Arc::new(Correlator::with_seed(store, CorrelatorConfig::default(), 7));
        Profiler::new(c, Profiler::DEFAULT_WINDOW)
    }

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    fn ctx(port: &str) -> NetworkContext {
        NetworkContext::new("sw1", port)
    }

    fn mab(m: &str, c: &NetworkContext, t: u64) -> Observation {
        Observation::new(ObservationKind::RadiusMab, mac(m), c.clone(), Timestamp(t)).with("auth_method", "mab")
    }

    fn dhcp(m: &str, c: &NetworkContext, t: u64) -> Observation {
        Observation::new(ObservationKind::Dhcp, mac(m), c.clone(), Timestamp(t))
            .with("dhcp_option_list", "1,3,6,15,119")
            .with("dhcp_vendor_class", "MedPump-X")
            .with("hostname", "pump-7")
    }

    #[test]
    fn mab_dhcp_reconnect_dhcp_ends_in_one_device() {
        let p = profiler();
        let c = ctx("gi1/0/7");
        let first = p.ingest(&mab("02:00:00:00:00:01", &c, 0)).unwrap();
        assert_eq!(first.path, MergePath::New);
        assert!(p.store().get(first.pdid).unwrap().provisional);

        let second = p.ingest(&dhcp("02:00:00:00:00:01", &c, 10)).unwrap();
        assert_eq!((second.pdid, second.path), (first.pdid, MergePath::Mac));
        assert!(!p.store().get(first.pdid).unwrap().provisional);

        // Reconnect long after the context window with a new randomized MAC.
        let third = p.ingest(&mab("02:00:00:00:00:02", &c, 1_000)).unwrap();
        assert_ne!(third.pdid, first.pdid);
        let fourth = p.ingest(&dhcp("02:00:00:00:00:02", &c, 1_010)).unwrap();
        assert_eq!((fourth.pdid, fourth.path), (first.pdid, MergePath::Folded));

        let store = p.store();
        assert_eq!(store.license_count().persistent, 1);
        assert_eq!(store.resolve(third.pdid), first.pdid);
        let rec = store.get(first.pdid).unwrap();
        assert!(rec.has_mac(&mac("02:00:00:00:00:01")) && rec.has_mac(&mac("02:00:00:00:00:02")));
        assert_eq!(rec.profile_value("auth_method"), Some("mab"));
        assert_eq!(rec.profile_value("dhcp_vendor_class"), Some("MedPump-X"));
        assert_eq!(p.ambiguity_flags(), 0);
    }

    #[test]
    fn identical_models_in_disjoint_contexts_stay_apart() {
        let p = profiler();
        let (c1, c2) = (ctx("1"), ctx("2"));
        let a = p.ingest(&mab("02:00:00:00:0a:01", &c1, 0)).unwrap().pdid;
        p.ingest(&dhcp("02:00:00:00:0a:01", &c1, 5)).unwrap();
        let b = p.ingest(&mab("02:00:00:00:0b:01", &c2, 20)).unwrap().pdid;
        match p.ingest(&dhcp("02:00:00:00:0b:01", &c2, 25)) {
            Err(ProfileError::AmbiguousFingerprint { pdid, candidates }) => {
                assert_eq!((pdid, candidates), (b, 1));
            }
            other => panic!("expected ambiguity, got {other:?}"),
        }
        assert_ne!(p.store().resolve(a), p.store().resolve(b));
        assert!(p.store().get(b).unwrap().flagged);
        assert!(!p.store().get(b).unwrap().ephemeral);
        assert_eq!(p.store().license_count().persistent, 2);
        assert_eq!(p.ambiguity_flags(), 1);
    }

    #[test]
    fn unmatched_fingerprint_on_fresh_mac_with_two_holders_is_ephemeral() {
        let p = profiler();
        for (i, port) in ["1", "2"].iter().enumerate() {
            let m = format!("02:00:00:00:0c:0{i}");
            p.ingest(&mab(&m, &ctx(port), i as u64)).unwrap();
            let _ = p.ingest(&dhcp(&m, &ctx(port), 10 + i as u64));
        }
        let err = p.ingest(&dhcp("02:00:00:00:0c:09", &ctx("3"), 500)).unwrap_err();
        let ProfileError::AmbiguousFingerprint { pdid, candidates } = err else {
            panic!("{err}");
        };
        assert_eq!(candidates, 2);
        assert!(p.store().get(pdid).unwrap().ephemeral);
    }

    #[test]
    fn context_window_is_inclusive() {
        let p = profiler();
        let c = ctx("9");
        let dev = p.ingest(&dhcp("00:09:fb:00:00:01", &c, 100)).unwrap().pdid;
        let dns = |m: &str, t: u64| Observation::new(ObservationKind::Dns, mac(m), c.clone(), Timestamp(t)).with("query", "pump.example");

        let at_edge = p.ingest(&dns("02:00:00:00:00:31", 100 + 120)).unwrap();
        assert_eq!((at_edge.pdid, at_edge.path), (dev, MergePath::Context));

        let past = p.ingest(&dns("02:00:00:00:00:32", 220 + 121)).unwrap();
        assert_ne!(past.pdid, dev);
        assert_eq!(past.path, MergePath::New);
    }

    #[test]
    fn dhcp_without_option_list_is_invalid() {
        let p = profiler();
        let obs = Observation::new(ObservationKind::Dhcp, mac("00:09:fb:00:00:01"), ctx("1"), Timestamp(0));
        assert!(matches!(p.ingest(&obs), Err(ProfileError::InvalidObservation { .. })));
    }

    #[test]
    fn dns_is_never_fingerprinted() {
        let obs = Observation::new(ObservationKind::Dns, mac("00:09:fb:00:00:01"), ctx("1"), Timestamp(0))
            .with("dhcp_option_list", "1,3");
        assert!(fingerprint(&obs).is_none());
    }
}
