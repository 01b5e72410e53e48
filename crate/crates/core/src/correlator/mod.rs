//! Priority-ordered identity correlation and serialized PDID creation.
//! This is the only place new identifiers are minted.

mod guard;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

pub use guard::GuardStats;
use guard::{Counters, GuardTable};

use crate::identity::{
    generate_pdid, AnchorKind, AttributeSource, DeviceRecord, EntropyUnavailable, Fingerprint, IdentityStore,
    InsertOutcome, NetworkContext, NewAnchor, NewRecord, Pdid,
};
use crate::mac::MacAddress;
use crate::profiler::FINGERPRINT_ATTRIBUTES;
use crate::time::Timestamp;

/// Scenario tag carried by a request.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UseCaseHint {
    GuestHotspot,
    Mab,
    Dot1x,
    Vpn,
}

impl UseCaseHint {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "guest-hotspot" | "hotspot" => UseCaseHint::GuestHotspot,
            "mab" => UseCaseHint::Mab,
            "dot1x" | "802.1x" => UseCaseHint::Dot1x,
            "vpn" => UseCaseHint::Vpn,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UseCaseHint::GuestHotspot => "guest-hotspot",
            UseCaseHint::Mab => "mab",
            UseCaseHint::Dot1x => "dot1x",
            UseCaseHint::Vpn => "vpn",
        }
    }
}

/// Everything a request offers as evidence of which device sent it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentitySignalSet {
    pub cert_id: Option<String>,
    pub mdm_id: Option<String>,
    pub agent_id: Option<String>,
    pub username: Option<String>,
    pub mac: Option<MacAddress>,
    pub fingerprint: Option<Fingerprint>,
    pub use_case_hint: Option<UseCaseHint>,
    /// Device attributes reported alongside the request (profile input).
    pub device_attrs: BTreeMap<String, String>,
}

impl IdentitySignalSet {
    pub fn anchor(&self, kind: AnchorKind) -> Option<&str> {
        match kind {
            AnchorKind::Certificate => self.cert_id.as_deref(),
            AnchorKind::MdmEnrollment => self.mdm_id.as_deref(),
            AnchorKind::AgentId => self.agent_id.as_deref(),
            AnchorKind::Username => self.username.as_deref(),
            AnchorKind::Fingerprint => self.fingerprint.as_ref().map(Fingerprint::as_str),
        }
    }

    /// No anchor and no MAC: nothing to correlate on.
    pub fn is_empty(&self) -> bool {
        self.mac.is_none() && AnchorKind::ALL.iter().all(|k| self.anchor(*k).is_none())
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Confidence {
    VeryHigh,
    High,
    Medium,
    New,
    None,
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Confidence::VeryHigh => "very-high",
            Confidence::High => "high",
            Confidence::Medium => "medium",
            Confidence::New => "new",
            Confidence::None => "none",
        })
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash)]
pub enum MatchedBy {
    Anchor(AnchorKind),
    New,
    Mac,
    NoneEphemeral,
}

impl fmt::Display for MatchedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchedBy::Anchor(k) => f.write_str(k.as_str()),
            MatchedBy::New => f.write_str("new"),
            MatchedBy::Mac => f.write_str("mac"),
            MatchedBy::NoneEphemeral => f.write_str("none-ephemeral"),
        }
    }
}

pub fn confidence_of(m: MatchedBy) -> Confidence {
    match m {
        MatchedBy::Anchor(AnchorKind::Certificate | AnchorKind::MdmEnrollment) => Confidence::VeryHigh,
        MatchedBy::Anchor(AnchorKind::AgentId) => Confidence::High,
        MatchedBy::Anchor(AnchorKind::Username | AnchorKind::Fingerprint) => Confidence::Medium,
        MatchedBy::Mac => Confidence::VeryHigh,
        MatchedBy::New => Confidence::New,
        MatchedBy::NoneEphemeral => Confidence::None,
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub struct CorrelationResult {
    pub pdid: Pdid,
    pub matched_by: MatchedBy,
    pub confidence: Confidence,
}

impl CorrelationResult {
    fn new(pdid: Pdid, matched_by: MatchedBy) -> Self {
        CorrelationResult {
            pdid,
            matched_by,
            confidence: confidence_of(matched_by),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorrelateError {
    #[error("creation guard for {0} not acquired in time")]
    GuardTimeout(String),
    #[error("request carries no identity signals")]
    NoSignals,
    #[error(transparent)]
    Entropy(#[from] EntropyUnavailable),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelatorConfig {
    /// Age after which a creation guard counts as abandoned.
    pub guard_timeout: Duration,
    /// How long a request waits for a busy guard before giving up.
    pub guard_wait: Duration,
    /// Let a username anchor match on its own, without shared device attributes.
    pub username_sufficient: bool,
}

impl Default for CorrelatorConfig {
    fn default() -> Self {
        CorrelatorConfig {
            guard_timeout: Duration::from_secs(5),
            guard_wait: Duration::from_secs(5),
            username_sufficient: false,
        }
    }
}

enum Entropy {
    Os,
    Seeded(Box<Mutex<ChaCha20Rng>>),
}

struct Stall {
    key: String,
    delay: Duration,
}

pub struct Correlator {
    store: Arc<IdentityStore>,
    config: CorrelatorConfig,
    guards: GuardTable,
    entropy: Entropy,
    stall: Mutex<Option<Stall>>,
}

impl Correlator {
    /// Identifiers come from the operating system's CSPRNG.
    pub fn new(store: Arc<IdentityStore>, config: CorrelatorConfig) -> Self {
        Self::build(store, config, Entropy::Os)
    }

    /// Identifiers come from a ChaCha20 stream seeded with `seed`.
    pub fn with_seed(store: Arc<IdentityStore>, config: CorrelatorConfig, seed: u64) -> Self {
        Self::build(store, config, Entropy::Seeded(Box::new(Mutex::new(ChaCha20Rng::seed_from_u64(seed)))))
    }

    fn build(store: Arc<IdentityStore>, config: CorrelatorConfig, entropy: Entropy) -> Self {
        Correlator {
            guards: GuardTable::new(config.guard_timeout, config.guard_wait),
            store,
            config,
            entropy,
            stall: Mutex::new(None),
        }
    }

    pub fn store(&self) -> &Arc<IdentityStore> {
        &self.store
    }

    pub fn config(&self) -> &CorrelatorConfig {
        &self.config
    }

    pub fn guard_stats(&self) -> GuardStats {
        self.guards.counters.snapshot()
    }

    /// Fault injection: the next request that acquires `key` sleeps for
    /// `delay` between its double-check and its commit.
    pub fn stall_next_commit(&self, key: &str, delay: Duration) {
        *self.stall.lock() = Some(Stall {
            key: key.to_string(),
            delay,
        });
    }

    fn mint(&self) -> Result<Pdid, EntropyUnavailable> {
        match &self.entropy {
            Entropy::Os => generate_pdid(&mut OsRng),
            Entropy::Seeded(rng) => generate_pdid(&mut *rng.lock()),
        }
    }

    /// The guard key for a creation: the strongest present signal in priority
    /// order, else the canonical MAC.
    pub fn guard_key(&self, signals: &IdentitySignalSet) -> Option<String> {
        for kind in self.store.config().anchor_priority {
            if let Some(v) = signals.anchor(kind) {
                return Some(format!("{kind}:{v}"));
            }
        }
        signals.mac.map(|m| format!("mac:{m}"))
    }

    fn username_ok(&self, rec: &DeviceRecord, signals: &IdentitySignalSet) -> bool {
        self.config.username_sufficient
            || FINGERPRINT_ATTRIBUTES.iter().any(|k| {
                matches!((signals.device_attrs.get(*k), rec.profile_value(k)), (Some(a), Some(b)) if a == b)
            })
    }

    /// First acceptable anchor hit in priority order.
    fn anchor_hit(
        &self,
        signals: &IdentitySignalSet,
        priority: &[AnchorKind],
        context: Option<&NetworkContext>,
    ) -> Option<(DeviceRecord, AnchorKind)> {
        for kind in priority {
            let Some(value) = signals.anchor(*kind) else { continue };
            let Some(rec) = self.store.lookup_by_anchor(*kind, value) else { continue };
            let accept = match kind {
                AnchorKind::Username => self.username_ok(&rec, signals),
                AnchorKind::Fingerprint => self.fingerprint_ok(&rec, signals, context),
                _ => true,
            };
            if accept {
                return Some((rec, *kind));
            }
        }
        None
    }

    /// A fingerprint is shared by every unit of a model, so it identifies a
    /// device only when one record has it, that record was seen where this
    /// request comes from, and none of the request's other anchors contradict it.
    fn fingerprint_ok(&self, rec: &DeviceRecord, signals: &IdentitySignalSet, context: Option<&NetworkContext>) -> bool {
        let Some(fp) = signals.fingerprint.as_ref() else { return false };
        if self.store.fingerprint_candidates(fp).len() != 1 {
            return false;
        }
        if context.is_some_and(|c| !rec.seen_in(c)) {
            return false;
        }
        AnchorKind::ALL.iter().all(|k| match (signals.anchor(*k), rec.anchors.get(k)) {
            (Some(ours), Some(theirs)) => *k == AnchorKind::Fingerprint || ours == theirs,
            _ => true,
        })
    }

    pub fn correlate(&self, signals: &IdentitySignalSet, now: Timestamp) -> Result<CorrelationResult, CorrelateError> {
        self.correlate_in(signals, None, now)
    }

    /// As [`correlate`](Self::correlate), remembering the network context on
    /// the resolved record.
    pub fn correlate_in(
        &self,
        signals: &IdentitySignalSet,
        context: Option<&NetworkContext>,
        now: Timestamp,
    ) -> Result<CorrelationResult, CorrelateError> {
        if signals.is_empty() {
            return Err(CorrelateError::NoSignals);
        }
        let start_seq = self.store.sequence();
        let priority = self.store.config().anchor_priority;

        let result = if signals.use_case_hint == Some(UseCaseHint::GuestHotspot) {
            self.create_ephemeral(signals, context, now)?
        } else if let Some((rec, kind)) = self.anchor_hit(signals, &priority, context) {
            self.finish_hit(rec.pdid, MatchedBy::Anchor(kind), signals, context, now)?
        } else if let Some(rec) = signals
            .mac
            .filter(|m| !m.is_locally_administered())
            .and_then(|m| self.store.lookup_by_mac(&m))
            .filter(|r| !r.ephemeral)
        {
            self.finish_hit(rec.pdid, MatchedBy::Mac, signals, context, now)?
        } else {
            self.create_guarded(signals, context, &priority, start_seq, now)?
        };

        if !signals.device_attrs.is_empty() {
            let _ = self
                .store
                .merge_attributes(result.pdid, &signals.device_attrs, AttributeSource::Authentication, now);
        }
        Ok(result)
    }

    fn finish_hit(
        &self,
        pdid: Pdid,
        by: MatchedBy,
        signals: &IdentitySignalSet,
        context: Option<&NetworkContext>,
        now: Timestamp,
    ) -> Result<CorrelationResult, CorrelateError> {
        let anchors: Vec<(AnchorKind, String)> = self
            .store
            .config()
            .anchor_priority
            .into_iter()
            .filter(|k| *k != AnchorKind::Fingerprint)
            .filter_map(|k| signals.anchor(k).map(|v| (k, v.to_string())))
            .collect();
        let out = match self.store.attach(pdid, &anchors, signals.mac, now) {
            Ok(o) => o,
            // Deleted between lookup and attach; treat the request as first contact.
            Err(_) => {
                let priority = self.store.config().anchor_priority;
                return self.create_guarded(signals, context, &priority, self.store.sequence(), now);
            }
        };
        let pdid = out.record.pdid;
        if let Some(fp) = &signals.fingerprint {
            let _ = self.store.add_fingerprint(pdid, fp, now);
        }
        if let Some(ctx) = context {
            let _ = self.store.note_context(pdid, ctx, now);
        }
        Ok(CorrelationResult::new(pdid, by))
    }

    fn create_ephemeral(
        &self,
        signals: &IdentitySignalSet,
        context: Option<&NetworkContext>,
        now: Timestamp,
    ) -> Result<CorrelationResult, CorrelateError> {
        let pdid = self.mint()?;
        let new = NewRecord {
            mac: signals.mac,
            ephemeral: true,
            context: context.cloned(),
            ..NewRecord::default()
        };
        let rec = match self.store.insert_new(pdid, new, now) {
            InsertOutcome::Created(r) | InsertOutcome::Existing { record: r, .. } => r,
        };
        Ok(CorrelationResult::new(rec.pdid, MatchedBy::NoneEphemeral))
    }

    /// Creates a record for an unmatched request, serialized per strongest
    /// signal so concurrent first contacts of one device yield one record.
    pub fn create_with_guard(
        &self,
        signals: &IdentitySignalSet,
        now: Timestamp,
    ) -> Result<CorrelationResult, CorrelateError> {
        if signals.is_empty() {
            return Err(CorrelateError::NoSignals);
        }
        let priority = self.store.config().anchor_priority;
        self.create_guarded(signals, None, &priority, self.store.sequence(), now)
    }

    fn create_guarded(
        &self,
        signals: &IdentitySignalSet,
        context: Option<&NetworkContext>,
        priority: &[AnchorKind],
        start_seq: u64,
        now: Timestamp,
    ) -> Result<CorrelationResult, CorrelateError> {
        let key = self.guard_key(signals).ok_or(CorrelateError::NoSignals)?;
        let handle = self
            .guards
            .acquire(&key)
            .ok_or_else(|| CorrelateError::GuardTimeout(key.clone()))?;

        // Double-check: a concurrent request may have created the device
        // while this one waited.
        if let Some(found) = self.existing_after_wait(signals, priority, context, start_seq) {
            Counters::bump(&self.guards.counters.double_check_saves);
            drop(handle);
            return self.finish_hit(found.0, found.1, signals, context, now);
        }

        let stall = {
            let mut slot = self.stall.lock();
            match slot.as_ref() {
                Some(s) if s.key == key => slot.take(),
                _ => None,
            }
        };
        if let Some(s) = stall {
            std::thread::sleep(s.delay);
        }
        if !handle.still_held() {
            // Our guard expired and someone else may have created the device meanwhile.
            if let Some(found) = self.existing_after_wait(signals, priority, context, start_seq) {
                Counters::bump(&self.guards.counters.late_write_rejections);
                drop(handle);
                return self.finish_hit(found.0, found.1, signals, context, now);
            }
        }

        let pdid = self.mint()?;
        let anchors = priority
            .iter()
            .filter_map(|k| {
                signals.anchor(*k).map(|v| NewAnchor {
                    kind: *k,
                    value: v.to_string(),
                    exclusive: match k {
                        AnchorKind::Certificate | AnchorKind::MdmEnrollment | AnchorKind::AgentId => true,
                        AnchorKind::Username => self.config.username_sufficient,
                        AnchorKind::Fingerprint => false,
                    },
                })
            })
            .collect();
        let new = NewRecord {
            anchors,
            mac: signals.mac,
            fingerprint: signals.fingerprint.clone(),
            ephemeral: false,
            provisional: false,
            context: context.cloned(),
            mac_claimed_since: Some(start_seq),
        };
        let outcome = self.store.insert_new(pdid, new, now);
        drop(handle);
        match outcome {
            InsertOutcome::Created(rec) => Ok(CorrelationResult::new(rec.pdid, MatchedBy::New)),
            InsertOutcome::Existing { record, via } => {
                Counters::bump(&self.guards.counters.late_write_rejections);
                let by = via.map(MatchedBy::Anchor).unwrap_or(MatchedBy::Mac);
                self.finish_hit(record.pdid, by, signals, context, now)
            }
        }
    }

    fn existing_after_wait(
        &self,
        signals: &IdentitySignalSet,
        priority: &[AnchorKind],
        context: Option<&NetworkContext>,
        start_seq: u64,
    ) -> Option<(Pdid, MatchedBy)> {
        if let Some((rec, kind)) = self.anchor_hit(signals, priority, context) {
            return Some((rec.pdid, MatchedBy::Anchor(kind)));
        }
        let rec = self.store.lookup_by_mac(&signals.mac?)?;
        (!rec.ephemeral && rec.creation_sequence() >= start_seq).then_some((rec.pdid, MatchedBy::Mac))
    }

    /// Mints an identifier for an already-decided new record (profiler and
    /// migration paths go through here so creation stays in one place).
    pub(crate) fn create_record(&self, new: NewRecord, now: Timestamp) -> Result<DeviceRecord, CorrelateError> {
        let pdid = self.mint()?;
        Ok(match self.store.insert_new(pdid, new, now) {
            InsertOutcome::Created(r) | InsertOutcome::Existing { record: r, .. } => r,
        })
    }
}
