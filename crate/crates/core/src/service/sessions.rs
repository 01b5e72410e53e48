use std::collections::BTreeMap;

use parking_lot::Mutex;
use serde::Serialize;

use crate::identity::{IdentityStore, Pdid};
use crate::mac::MacAddress;
use crate::time::Timestamp;

/// Who an accounting session belongs to. Sessions recorded while the
/// identifier feature is off are keyed by MAC until migration re-keys them.
#[derive(Debug, Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionOwner {
    Pdid(Pdid),
    Mac(MacAddress),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionRecord {
    pub owner: SessionOwner,
    pub acct_session_id: String,
    pub nas: String,
    pub mac: Option<MacAddress>,
    pub start: Option<Timestamp>,
    pub stop: Option<Timestamp>,
    pub input_octets: u64,
    pub output_octets: u64,
    /// A Stop arrived for a session that never started.
    pub stop_without_start: bool,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub enum AcctStatus {
    Start,
    Stop,
    Interim,
}

impl AcctStatus {
    pub fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(AcctStatus::Start),
            2 => Some(AcctStatus::Stop),
            3 => Some(AcctStatus::Interim),
            _ => None,
        }
    }
}

pub struct AccountingUpdate<'a> {
    pub status: AcctStatus,
    pub nas: &'a str,
    pub session_id: &'a str,
    pub owner: SessionOwner,
    pub mac: Option<MacAddress>,
    pub input_octets: Option<u64>,
    pub output_octets: Option<u64>,
    pub t: Timestamp,
}

/// Sessions keyed by (NAS name, Acct-Session-Id).
#[derive(Default)]
pub struct SessionTable {
    inner: Mutex<BTreeMap<(String, String), SessionRecord>>,
}

impl SessionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one accounting record; returns the session after the update.
    pub fn apply(&self, u: AccountingUpdate<'_>) -> SessionRecord {
        let mut inner = self.inner.lock();
        let key = (u.nas.to_string(), u.session_id.to_string());
        let fresh = !inner.contains_key(&key);
        let s = inner.entry(key).or_insert_with(|| SessionRecord {
            owner: u.owner,
            acct_session_id: u.session_id.to_string(),
            nas: u.nas.to_string(),
            mac: u.mac,
            start: None,
            stop: None,
            input_octets: 0,
            output_octets: 0,
            stop_without_start: false,
        });
        if s.owner == SessionOwner::Unknown {
            s.owner = u.owner;
        }
        if s.mac.is_none() {
            s.mac = u.mac;
        }
        match u.status {
            AcctStatus::Start => {
                s.start.get_or_insert(u.t);
            }
            AcctStatus::Interim => {}
            AcctStatus::Stop => {
                if fresh {
                    s.stop_without_start = true;
                }
                s.stop = Some(u.t);
            }
        }
        if let Some(v) = u.input_octets {
            s.input_octets = s.input_octets.max(v);
        }
        if let Some(v) = u.output_octets {
            s.output_octets = s.output_octets.max(v);
        }
        s.clone()
    }

    /// Moves MAC-keyed sessions of `mac` under `pdid`.
    pub fn rekey(&self, mac: MacAddress, pdid: Pdid) -> usize {
        let mut n = 0;
        for s in self.inner.lock().values_mut() {
            if s.owner == SessionOwner::Mac(mac) {
                s.owner = SessionOwner::Pdid(pdid);
                n += 1;
            }
        }
        n
    }

    pub fn all(&self) -> Vec<SessionRecord> {
        self.inner.lock().values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sessions grouped by owner, with folded identifiers resolved to the
    /// surviving record.
    pub fn grouped(&self, store: &IdentityStore) -> BTreeMap<SessionOwner, Vec<SessionRecord>> {
        let mut out: BTreeMap<SessionOwner, Vec<SessionRecord>> = BTreeMap::new();
        for s in self.all() {
            let owner = match s.owner {
                SessionOwner::Pdid(p) => SessionOwner::Pdid(store.resolve(p)),
                other => other,
            };
            out.entry(owner).or_default().push(s);
        }
        out
    }
}
