use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;
use thiserror::Error;

use super::audit::{AuditLog, AuditOp};
use super::record::*;
use super::snapshot::{self, SnapshotData};
use super::Pdid;
use crate::mac::{MacAddress, OuiRegistry};
use crate::time::Timestamp;

const STORE_ACTOR: &str = "identity-store";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreConfig {
    pub feature_enabled: bool,
    /// Idle time after which a persistent record is pruned.
    pub retention: Duration,
    /// Idle time after which an ephemeral record is pruned.
    pub ephemeral_retention: Duration,
    pub max_macs_per_pdid: usize,
    pub anchor_priority: Vec<AnchorKind>,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            feature_enabled: true,
            retention: Duration::from_secs(180 * 86_400),
            ephemeral_retention: Duration::from_secs(24 * 3_600),
            max_macs_per_pdid: 64,
            anchor_priority: AnchorKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("anchor kind {0} listed more than once in the priority order")]
    DuplicateAnchor(AnchorKind),
    #[error("max_macs_per_pdid must be at least 1")]
    ZeroMacCap,
}

impl StoreConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for k in &self.anchor_priority {
            if !seen.insert(*k) {
                return Err(ConfigError::DuplicateAnchor(*k));
            }
        }
        if self.max_macs_per_pdid == 0 {
            return Err(ConfigError::ZeroMacCap);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown PDID {0}")]
    UnknownPdid(Pdid),
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, Default, serde::Serialize)]
pub struct LicenseCount {
    pub persistent: usize,
    pub ephemeral: usize,
}

/// A pre-existing MAC-keyed device record from before identifiers were enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegacyRecord {
    pub mac: MacAddress,
    pub profile: BTreeMap<String, ProfileEntry>,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
    pub sessions: Vec<String>,
}

/// An anchor to register on a new record. An `exclusive` anchor that turns
/// out to be held already means the request belongs to the holder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewAnchor {
    pub kind: AnchorKind,
    pub value: String,
    pub exclusive: bool,
}

#[derive(Debug, Clone, Default)]
pub struct NewRecord {
    pub anchors: Vec<NewAnchor>,
    pub mac: Option<MacAddress>,
    pub fingerprint: Option<Fingerprint>,
    pub ephemeral: bool,
    pub provisional: bool,
    pub context: Option<NetworkContext>,
    /// Treat the MAC as taken if a record created at or after this sequence
    /// number already holds it.
    pub mac_claimed_since: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum InsertOutcome {
    Created(DeviceRecord),
    /// A concurrent writer got there first; nothing was written.
    Existing { record: DeviceRecord, via: Option<AnchorKind> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnchorConflict {
    /// The record already holds a different value of this kind.
    Differs { kind: AnchorKind, held: String, offered: String },
    /// Another record holds this value.
    HeldElsewhere { kind: AnchorKind, holder: Pdid },
}

#[derive(Debug, Clone)]
pub struct AttachOutcome {
    pub record: DeviceRecord,
    pub added: Vec<AnchorKind>,
    pub conflicts: Vec<AnchorConflict>,
    pub new_mac: bool,
}

#[derive(Default)]
pub(super) struct Inner {
    pub(super) records: HashMap<Pdid, DeviceRecord>,
    by_mac: HashMap<MacAddress, Pdid>,
    by_anchor: HashMap<(AnchorKind, String), Pdid>,
    by_fingerprint: HashMap<Fingerprint, BTreeSet<Pdid>>,
    pub(super) aliases: HashMap<Pdid, Pdid>,
    pub(super) legacy: BTreeMap<MacAddress, LegacyRecord>,
    pub(super) next_seq: u64,
}

impl Inner {
    fn resolve(&self, mut pdid: Pdid) -> Pdid {
        for _ in 0..64 {
            match self.aliases.get(&pdid) {
                Some(next) => pdid = *next,
                None => break,
            }
        }
        pdid
    }

    fn index_record(&mut self, rec: &DeviceRecord) {
        for e in &rec.macs {
            self.by_mac.insert(e.mac, rec.pdid);
        }
        if !rec.ephemeral {
            for (k, v) in &rec.anchors {
                self.by_anchor.insert((*k, v.clone()), rec.pdid);
            }
        }
        for fp in &rec.fingerprints {
            self.by_fingerprint.entry(fp.clone()).or_default().insert(rec.pdid);
        }
    }

    fn unindex_record(&mut self, rec: &DeviceRecord) {
        for e in &rec.macs {
            if self.by_mac.get(&e.mac) == Some(&rec.pdid) {
                self.by_mac.remove(&e.mac);
            }
        }
        for (k, v) in &rec.anchors {
            let key = (*k, v.clone());
            if self.by_anchor.get(&key) == Some(&rec.pdid) {
                self.by_anchor.remove(&key);
            }
        }
        for fp in &rec.fingerprints {
            if let Some(set) = self.by_fingerprint.get_mut(fp) {
                set.remove(&rec.pdid);
                if set.is_empty() {
                    self.by_fingerprint.remove(fp);
                }
            }
        }
    }

    fn rebuild_indexes(&mut self) {
        self.by_mac.clear();
        self.by_anchor.clear();
        self.by_fingerprint.clear();
        let mut recs: Vec<DeviceRecord> = self.records.values().cloned().collect();
        recs.sort_by_key(|r| r.created_seq);
        for r in &recs {
            self.index_record(r);
        }
    }
}

/// The persistent identity store: records keyed by PDID with secondary
/// indexes on MAC, anchor and fingerprint. All operations are atomic with
/// respect to the indexes.
pub struct IdentityStore {
    inner: RwLock<Inner>,
    config: RwLock<StoreConfig>,
    feature_enabled: AtomicBool,
    registry: Arc<OuiRegistry>,
    audit: Arc<AuditLog>,
}

impl IdentityStore {
    pub fn new(config: StoreConfig) -> Result<Self, ConfigError> {
        Self::with_parts(config, Arc::new(OuiRegistry::bundled()), Arc::new(AuditLog::new()))
    }

    pub fn with_parts(config: StoreConfig, registry: Arc<OuiRegistry>, audit: Arc<AuditLog>) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(IdentityStore {
            inner: RwLock::new(Inner::default()),
            feature_enabled: AtomicBool::new(config.feature_enabled),
            config: RwLock::new(config),
            registry,
            audit,
        })
    }

    pub fn config(&self) -> StoreConfig {
        let mut c = self.config.read().clone();
        c.feature_enabled = self.feature_enabled();
        c
    }

    pub fn feature_enabled(&self) -> bool {
        self.feature_enabled.load(Ordering::SeqCst)
    }

    pub fn set_feature_enabled(&self, on: bool) {
        self.feature_enabled.store(on, Ordering::SeqCst);
    }

    pub fn audit(&self) -> &Arc<AuditLog> {
        &self.audit
    }

    pub fn registry(&self) -> &Arc<OuiRegistry> {
        &self.registry
    }

    /// Sequence number the next created record will receive.
    pub fn sequence(&self) -> u64 {
        self.inner.read().next_seq
    }

    /// Follows fold aliases to the surviving identifier.
    pub fn resolve(&self, pdid: Pdid) -> Pdid {
        self.inner.read().resolve(pdid)
    }

    /// Every identifier ever folded into `pdid`, including itself.
    pub fn aliases_of(&self, pdid: Pdid) -> Vec<Pdid> {
        let inner = self.inner.read();
        let target = inner.resolve(pdid);
        let mut out = vec![target];
        let mut others: Vec<Pdid> = inner
            .aliases
            .keys()
            .filter(|p| inner.resolve(**p) == target)
            .copied()
            .collect();
        others.sort();
        out.extend(others);
        out
    }

    pub fn get(&self, pdid: Pdid) -> Option<DeviceRecord> {
        let inner = self.inner.read();
        inner.records.get(&inner.resolve(pdid)).cloned()
    }

    pub fn contains(&self, pdid: Pdid) -> bool {
        let inner = self.inner.read();
        inner.records.contains_key(&inner.resolve(pdid))
    }

    /// The unique non-ephemeral record holding `(kind, value)`.
    pub fn lookup_by_anchor(&self, kind: AnchorKind, value: &str) -> Option<DeviceRecord> {
        let inner = self.inner.read();
        let pdid = inner.by_anchor.get(&(kind, value.to_string()))?;
        inner.records.get(pdid).cloned()
    }

    /// The record `mac` was most recently associated with.
    pub fn lookup_by_mac(&self, mac: &MacAddress) -> Option<DeviceRecord> {
        let inner = self.inner.read();
        let pdid = inner.by_mac.get(mac)?;
        inner.records.get(pdid).cloned()
    }

    /// Non-ephemeral records that have produced fingerprint `fp`.
    pub fn fingerprint_candidates(&self, fp: &Fingerprint) -> Vec<DeviceRecord> {
        let inner = self.inner.read();
        inner
            .by_fingerprint
            .get(fp)
            .into_iter()
            .flatten()
            .filter_map(|p| inner.records.get(p))
            .filter(|r| !r.ephemeral)
            .cloned()
            .collect()
    }

    /// All records in creation order.
    pub fn records(&self) -> Vec<DeviceRecord> {
        let inner = self.inner.read();
        let mut v: Vec<DeviceRecord> = inner.records.values().cloned().collect();
        v.sort_by_key(|r| r.created_seq);
        v
    }

    pub fn len(&self) -> usize {
        self.inner.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persistent records count once each; ephemeral records are reported
    /// separately. MAC addresses never count.
    pub fn license_count(&self) -> LicenseCount {
        let inner = self.inner.read();
        let ephemeral = inner.records.values().filter(|r| r.ephemeral).count();
        LicenseCount {
            persistent: inner.records.len() - ephemeral,
            ephemeral,
        }
    }

    /// Distinct MAC addresses currently associated with any record.
    pub fn mac_count(&self) -> usize {
        self.inner.read().by_mac.len()
    }

    /// Writes a new record unless an exclusive anchor (or a freshly claimed
    /// MAC) shows a concurrent writer already created this device. The
    /// check and the write happen under one lock.
    pub fn insert_new(&self, pdid: Pdid, new: NewRecord, t: Timestamp) -> InsertOutcome {
        let cap = self.config.read().max_macs_per_pdid;
        let mut inner = self.inner.write();
        if !new.ephemeral {
            for a in new.anchors.iter().filter(|a| a.exclusive) {
                if let Some(holder) = inner.by_anchor.get(&(a.kind, a.value.clone())) {
                    let record = inner.records[holder].clone();
                    return InsertOutcome::Existing {
                        record,
                        via: Some(a.kind),
                    };
                }
            }
            if let (Some(mac), Some(since)) = (new.mac, new.mac_claimed_since) {
                if let Some(holder) = inner.by_mac.get(&mac) {
                    let rec = &inner.records[holder];
                    if !rec.ephemeral && rec.created_seq >= since {
                        return InsertOutcome::Existing {
                            record: rec.clone(),
                            via: None,
                        };
                    }
                }
            }
        }

        let seq = inner.next_seq;
        inner.next_seq += 1;
        let mut rec = DeviceRecord {
            pdid,
            macs: Vec::new(),
            anchors: BTreeMap::new(),
            profile: BTreeMap::new(),
            fingerprints: Vec::new(),
            contexts: Vec::new(),
            created_at: t,
            last_seen: t,
            ephemeral: new.ephemeral,
            provisional: new.provisional,
            flagged: false,
            historical_oui: None,
            created_seq: seq,
        };
        if !new.ephemeral {
            for a in &new.anchors {
                let key = (a.kind, a.value.clone());
                if rec.anchors.contains_key(&a.kind) || inner.by_anchor.contains_key(&key) {
                    continue;
                }
                rec.anchors.insert(a.kind, a.value.clone());
                inner.by_anchor.insert(key, pdid);
            }
        }
        if let (Some(fp), false) = (&new.fingerprint, new.ephemeral) {
            rec.fingerprints.push(fp.clone());
            inner.by_fingerprint.entry(fp.clone()).or_default().insert(pdid);
        }
        if let Some(ctx) = new.context {
            rec.contexts.push(ContextEntry { context: ctx, last_seen: t });
        }
        inner.records.insert(pdid, rec);
        self.audit.record(t, AuditOp::Created, Some(pdid), STORE_ACTOR, if new.ephemeral { "ephemeral" } else { "" });
        if let Some(mac) = new.mac {
            self.associate_locked(&mut inner, pdid, mac, t, cap);
        }
        InsertOutcome::Created(inner.records[&pdid].clone())
    }

    fn associate_locked(&self, inner: &mut Inner, pdid: Pdid, mac: MacAddress, t: Timestamp, cap: usize) -> bool {
        // Partition: move the MAC away from any other record first.
        if let Some(prev) = inner.by_mac.get(&mac).copied() {
            if prev != pdid {
                if let Some(other) = inner.records.get_mut(&prev) {
                    other.macs.retain(|e| e.mac != mac);
                }
            }
        }
        inner.by_mac.insert(mac, pdid);

        let registry = &self.registry;
        let rec = inner.records.get_mut(&pdid).expect("caller checked existence");
        rec.last_seen = rec.last_seen.max(t);
        let is_new = match rec.macs.iter_mut().find(|e| e.mac == mac) {
            Some(e) => {
                e.last_seen = e.last_seen.max(t);
                false
            }
            None => {
                rec.macs.push(MacEntry {
                    mac,
                    first_seen: t,
                    last_seen: t,
                });
                true
            }
        };
        if rec.historical_oui.is_none() {
            if let Some(oui) = mac.oui() {
                rec.historical_oui = Some(HistoricalOui {
                    oui,
                    vendor: registry.vendor(oui).map(str::to_string),
                });
            }
        }
        let mut evicted = Vec::new();
        while rec.macs.len() > cap {
            let (idx, _) = rec
                .macs
                .iter()
                .enumerate()
                .filter(|(_, e)| e.mac != mac)
                .min_by_key(|(_, e)| (e.last_seen, e.first_seen))
                .expect("cap >= 1 leaves a candidate");
            evicted.push(rec.macs.remove(idx).mac);
        }
        for m in &evicted {
            if inner.by_mac.get(m) == Some(&pdid) {
                inner.by_mac.remove(m);
            }
        }
        if is_new {
            self.audit.record(t, AuditOp::MacAssociated, Some(pdid), STORE_ACTOR, mac.to_string());
        }
        for m in evicted {
            self.audit.record(t, AuditOp::MacEvicted, Some(pdid), STORE_ACTOR, m.to_string());
        }
        is_new
    }

    pub fn associate_mac(&self, pdid: Pdid, mac: MacAddress, t: Timestamp) -> Result<DeviceRecord, StoreError> {
        let cap = self.config.read().max_macs_per_pdid;
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        if !inner.records.contains_key(&pdid) {
            return Err(StoreError::UnknownPdid(pdid));
        }
        self.associate_locked(&mut inner, pdid, mac, t, cap);
        Ok(inner.records[&pdid].clone())
    }

    fn add_anchor_locked(
        &self,
        inner: &mut Inner,
        pdid: Pdid,
        kind: AnchorKind,
        value: &str,
        t: Timestamp,
    ) -> Result<bool, AnchorConflict> {
        let key = (kind, value.to_string());
        if let Some(holder) = inner.by_anchor.get(&key) {
            return if *holder == pdid {
                Ok(false)
            } else {
                Err(AnchorConflict::HeldElsewhere { kind, holder: *holder })
            };
        }
        let rec = inner.records.get_mut(&pdid).expect("caller checked existence");
        if rec.ephemeral {
            return Ok(false);
        }
        if let Some(held) = rec.anchors.get(&kind) {
            let held = held.clone();
            // Keep the anchor; remember the contradicting value in the profile history.
            let entry_key = format!("anchor.{kind}");
            let entry = rec.profile.entry(entry_key).or_insert_with(|| ProfileEntry {
                value: held.clone(),
                source: AttributeSource::Authentication,
                t: rec.created_at,
                history: Vec::new(),
            });
            entry.history.insert(
                0,
                HistoryEntry {
                    value: value.to_string(),
                    source: AttributeSource::Authentication,
                    t,
                },
            );
            entry.history.truncate(PROFILE_HISTORY_DEPTH);
            return Err(AnchorConflict::Differs {
                kind,
                held,
                offered: value.to_string(),
            });
        }
        rec.anchors.insert(kind, value.to_string());
        inner.by_anchor.insert(key, pdid);
        Ok(true)
    }

    /// Records anchors and a MAC on an existing record in one atomic step.
    pub fn attach(
        &self,
        pdid: Pdid,
        anchors: &[(AnchorKind, String)],
        mac: Option<MacAddress>,
        t: Timestamp,
    ) -> Result<AttachOutcome, StoreError> {
        let cap = self.config.read().max_macs_per_pdid;
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        if !inner.records.contains_key(&pdid) {
            return Err(StoreError::UnknownPdid(pdid));
        }
        let mut added = Vec::new();
        let mut conflicts = Vec::new();
        for (kind, value) in anchors {
            match self.add_anchor_locked(&mut inner, pdid, *kind, value, t) {
                Ok(true) => added.push(*kind),
                Ok(false) => {}
                Err(c) => conflicts.push(c),
            }
        }
        for k in &added {
            self.audit.record(t, AuditOp::AnchorAdded, Some(pdid), STORE_ACTOR, k.as_str());
        }
        for c in conflicts.iter().filter(|c| matches!(c, AnchorConflict::Differs { .. })) {
            self.audit.record(t, AuditOp::AnchorConflict, Some(pdid), STORE_ACTOR, format!("{c:?}"));
        }
        let new_mac = match mac {
            Some(m) => self.associate_locked(&mut inner, pdid, m, t, cap),
            None => false,
        };
        let rec = inner.records.get_mut(&pdid).expect("checked above");
        rec.last_seen = rec.last_seen.max(t);
        Ok(AttachOutcome {
            record: rec.clone(),
            added,
            conflicts,
            new_mac,
        })
    }

    /// Per key, the newest timestamp wins and displaced values are kept in a
    /// bounded history.
    pub fn merge_attributes(
        &self,
        pdid: Pdid,
        attrs: &BTreeMap<String, String>,
        source: AttributeSource,
        t: Timestamp,
    ) -> Result<DeviceRecord, StoreError> {
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        let rec = inner.records.get_mut(&pdid).ok_or(StoreError::UnknownPdid(pdid))?;
        merge_profile(&mut rec.profile, attrs, source, t);
        rec.last_seen = rec.last_seen.max(t);
        Ok(rec.clone())
    }

    pub fn note_context(&self, pdid: Pdid, ctx: &NetworkContext, t: Timestamp) -> Result<(), StoreError> {
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        let rec = inner.records.get_mut(&pdid).ok_or(StoreError::UnknownPdid(pdid))?;
        push_context(rec, ctx.clone(), t);
        rec.last_seen = rec.last_seen.max(t);
        Ok(())
    }

    /// Remembers that `pdid` produced `fp`, and claims the fingerprint anchor
    /// when nobody holds it yet.
    pub fn add_fingerprint(&self, pdid: Pdid, fp: &Fingerprint, t: Timestamp) -> Result<(), StoreError> {
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        let rec = inner.records.get_mut(&pdid).ok_or(StoreError::UnknownPdid(pdid))?;
        if rec.ephemeral {
            return Ok(());
        }
        let mut dropped = None;
        if !rec.fingerprints.contains(fp) {
            rec.fingerprints.push(fp.clone());
            if rec.fingerprints.len() > FINGERPRINT_HISTORY_LEN {
                dropped = Some(rec.fingerprints.remove(0));
            }
        }
        let wants_anchor = !rec.anchors.contains_key(&AnchorKind::Fingerprint);
        inner.by_fingerprint.entry(fp.clone()).or_default().insert(pdid);
        if let Some(old) = dropped {
            if let Some(set) = inner.by_fingerprint.get_mut(&old) {
                set.remove(&pdid);
            }
        }
        if wants_anchor {
            let _ = self.add_anchor_locked(&mut inner, pdid, AnchorKind::Fingerprint, fp.as_str(), t);
        }
        Ok(())
    }

    pub fn set_provisional(&self, pdid: Pdid, provisional: bool) -> Result<(), StoreError> {
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        let rec = inner.records.get_mut(&pdid).ok_or(StoreError::UnknownPdid(pdid))?;
        rec.provisional = provisional;
        Ok(())
    }

    /// Marks a record as carrying an unresolved fingerprint collision. With
    /// `demote`, it also leaves the persistent count.
    pub fn flag(&self, pdid: Pdid, demote: bool) -> Result<(), StoreError> {
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        let rec = inner.records.get_mut(&pdid).ok_or(StoreError::UnknownPdid(pdid))?;
        rec.flagged = true;
        if demote && !rec.ephemeral {
            rec.ephemeral = true;
            rec.provisional = false;
            let snapshot = rec.clone();
            for (k, v) in &snapshot.anchors {
                let key = (*k, v.clone());
                if inner.by_anchor.get(&key) == Some(&pdid) {
                    inner.by_anchor.remove(&key);
                }
            }
            for fp in &snapshot.fingerprints {
                if let Some(set) = inner.by_fingerprint.get_mut(fp) {
                    set.remove(&pdid);
                }
            }
            let rec = inner.records.get_mut(&pdid).expect("present");
            rec.anchors.clear();
            rec.fingerprints.clear();
        }
        Ok(())
    }

    /// Folds `from` into `into`: MACs, profile, contexts and fingerprints move,
    /// free anchors move, and `from` becomes an alias of `into`.
    pub fn fold(&self, from: Pdid, into: Pdid, t: Timestamp, actor: &str) -> Result<DeviceRecord, StoreError> {
        let cap = self.config.read().max_macs_per_pdid;
        let mut inner = self.inner.write();
        let from = inner.resolve(from);
        let into = inner.resolve(into);
        if !inner.records.contains_key(&into) {
            return Err(StoreError::UnknownPdid(into));
        }
        if from == into {
            return Ok(inner.records[&into].clone());
        }
        let donor = inner.records.remove(&from).ok_or(StoreError::UnknownPdid(from))?;
        inner.unindex_record(&donor);

        let mut macs = donor.macs.clone();
        macs.sort_by_key(|e| e.last_seen);
        for e in &macs {
            self.associate_locked(&mut inner, into, e.mac, e.last_seen, cap);
        }
        for (k, v) in &donor.anchors {
            let _ = self.add_anchor_locked(&mut inner, into, *k, v, t);
        }
        let rec = inner.records.get_mut(&into).expect("checked");
        for (k, e) in &donor.profile {
            let mut entries: Vec<HistoryEntry> = e.history.iter().rev().cloned().collect();
            entries.push(HistoryEntry {
                value: e.value.clone(),
                source: e.source,
                t: e.t,
            });
            for h in entries {
                let single = BTreeMap::from([(k.clone(), h.value)]);
                merge_profile(&mut rec.profile, &single, h.source, h.t);
            }
        }
        for c in &donor.contexts {
            push_context(rec, c.context.clone(), c.last_seen);
        }
        if rec.historical_oui.is_none() {
            rec.historical_oui = donor.historical_oui.clone();
        }
        rec.created_at = rec.created_at.min(donor.created_at);
        rec.last_seen = rec.last_seen.max(donor.last_seen).max(t);
        rec.flagged |= donor.flagged;
        let new_fps: Vec<Fingerprint> = donor
            .fingerprints
            .iter()
            .filter(|f| !rec.fingerprints.contains(f))
            .cloned()
            .collect();
        rec.fingerprints.extend(new_fps.iter().cloned());
        for fp in new_fps {
            inner.by_fingerprint.entry(fp).or_default().insert(into);
        }
        inner.aliases.insert(from, into);
        self.audit.record(t, AuditOp::Folded, Some(into), actor, format!("absorbed {from}"));
        self.audit.record(t, AuditOp::Folded, Some(from), actor, format!("merged into {into}"));
        Ok(inner.records[&into].clone())
    }

    /// Removes a record and every index entry pointing at it.
    pub fn delete_pdid(&self, pdid: Pdid, t: Timestamp, actor: &str) -> bool {
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        match inner.records.remove(&pdid) {
            Some(rec) => {
                inner.unindex_record(&rec);
                self.audit.record(t, AuditOp::Deleted, Some(pdid), actor, "");
                true
            }
            None => false,
        }
    }

    /// Drops ephemeral records idle longer than the ephemeral retention and
    /// persistent records idle longer than the retention.
    pub fn prune(&self, now: Timestamp, actor: &str) -> usize {
        let cfg = self.config.read().clone();
        let mut inner = self.inner.write();
        let mut stale: Vec<Pdid> = inner
            .records
            .values()
            .filter(|r| {
                let limit = if r.ephemeral { cfg.ephemeral_retention } else { cfg.retention };
                now.since(r.last_seen) > limit.as_secs()
            })
            .map(|r| r.pdid)
            .collect();
        stale.sort();
        for p in &stale {
            if let Some(rec) = inner.records.remove(p) {
                inner.unindex_record(&rec);
                self.audit.record(now, AuditOp::Pruned, Some(*p), actor, "");
            }
        }
        stale.len()
    }

    pub fn legacy_record(&self, mac: &MacAddress) -> Option<LegacyRecord> {
        self.inner.read().legacy.get(mac).cloned()
    }

    pub fn legacy_records(&self) -> Vec<LegacyRecord> {
        self.inner.read().legacy.values().cloned().collect()
    }

    pub fn legacy_count(&self) -> usize {
        self.inner.read().legacy.len()
    }

    /// Creates or updates the MAC-keyed record used while identifiers are off.
    pub fn upsert_legacy(
        &self,
        mac: MacAddress,
        attrs: &BTreeMap<String, String>,
        source: AttributeSource,
        t: Timestamp,
    ) -> LegacyRecord {
        let mut inner = self.inner.write();
        let rec = inner.legacy.entry(mac).or_insert_with(|| LegacyRecord {
            mac,
            profile: BTreeMap::new(),
            first_seen: t,
            last_seen: t,
            sessions: Vec::new(),
        });
        merge_profile(&mut rec.profile, attrs, source, t);
        rec.last_seen = rec.last_seen.max(t);
        rec.clone()
    }

    pub fn add_legacy_session(&self, mac: MacAddress, session_id: &str, t: Timestamp) {
        self.upsert_legacy(mac, &BTreeMap::new(), AttributeSource::Authentication, t);
        let mut inner = self.inner.write();
        if let Some(rec) = inner.legacy.get_mut(&mac) {
            if !rec.sessions.iter().any(|s| s == session_id) {
                rec.sessions.push(session_id.to_string());
            }
        }
    }

    /// Removes and returns the legacy record for `mac`.
    pub fn take_legacy(&self, mac: &MacAddress) -> Option<LegacyRecord> {
        self.inner.write().legacy.remove(mac)
    }

    /// Copies legacy profile entries, history included, into a record.
    pub fn absorb_legacy(&self, pdid: Pdid, legacy: &LegacyRecord) -> Result<DeviceRecord, StoreError> {
        let mut inner = self.inner.write();
        let pdid = inner.resolve(pdid);
        let rec = inner.records.get_mut(&pdid).ok_or(StoreError::UnknownPdid(pdid))?;
        for (k, e) in &legacy.profile {
            let mut entries: Vec<HistoryEntry> = e.history.iter().rev().cloned().collect();
            entries.push(HistoryEntry {
                value: e.value.clone(),
                source: e.source,
                t: e.t,
            });
            for h in entries {
                merge_profile(&mut rec.profile, &BTreeMap::from([(k.clone(), h.value)]), h.source, h.t);
            }
        }
        rec.created_at = rec.created_at.min(legacy.first_seen);
        Ok(rec.clone())
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let data = {
            let inner = self.inner.read();
            SnapshotData::capture(&inner)
        };
        snapshot::write_file(path.as_ref(), &data)?;
        Ok(())
    }

    pub fn load_snapshot(
        path: impl AsRef<Path>,
        config: StoreConfig,
        registry: Arc<OuiRegistry>,
        audit: Arc<AuditLog>,
    ) -> Result<Self, StoreError> {
        let data = snapshot::read_file(path.as_ref())?;
        let store = Self::with_parts(config, registry, audit)?;
        {
            let mut inner = store.inner.write();
            data.restore(&mut inner);
            inner.rebuild_indexes();
        }
        Ok(store)
    }
}

fn push_context(rec: &mut DeviceRecord, ctx: NetworkContext, t: Timestamp) {
    match rec.contexts.iter_mut().find(|c| c.context == ctx) {
        Some(c) => c.last_seen = c.last_seen.max(t),
        None => {
            rec.contexts.push(ContextEntry { context: ctx, last_seen: t });
            if rec.contexts.len() > CONTEXT_HISTORY_LEN {
                let (idx, _) = rec
                    .contexts
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, c)| c.last_seen)
                    .expect("non-empty");
                rec.contexts.remove(idx);
            }
        }
    }
}
