use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::Serialize;

const SHARDS: usize = 64;

struct Holder {
    token: u64,
    acquired: Instant,
}

#[derive(Default)]
struct Shard {
    held: Mutex<HashMap<String, Holder>>,
    released: Condvar,
}

#[derive(Default)]
pub(crate) struct Counters {
    pub acquisitions: AtomicU64,
    pub timeouts: AtomicU64,
    pub double_check_saves: AtomicU64,
    pub expired_takeovers: AtomicU64,
    pub late_write_rejections: AtomicU64,
}

/// Point-in-time copy of the guard counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GuardStats {
    pub acquisitions: u64,
    pub timeouts: u64,
    /// Requests that found the device already created after acquiring.
    pub double_check_saves: u64,
    pub expired_takeovers: u64,
    /// Commits refused because another writer created the device first.
    pub late_write_rejections: u64,
}

impl Counters {
    pub fn snapshot(&self) -> GuardStats {
        GuardStats {
            acquisitions: self.acquisitions.load(Ordering::Relaxed),
            timeouts: self.timeouts.load(Ordering::Relaxed),
            double_check_saves: self.double_check_saves.load(Ordering::Relaxed),
            expired_takeovers: self.expired_takeovers.load(Ordering::Relaxed),
            late_write_rejections: self.late_write_rejections.load(Ordering::Relaxed),
        }
    }

    pub fn bump(c: &AtomicU64) {
        c.fetch_add(1, Ordering::Relaxed);
    }
}

/// Keyed exclusive handles with expiry. Keys hash onto independent shards,
/// so requests for different keys never wait on each other's holders.
pub(crate) struct GuardTable {
    shards: Vec<Shard>,
    ttl: Duration,
    wait: Duration,
    next_token: AtomicU64,
    pub counters: Counters,
}

pub(crate) struct GuardHandle<'a> {
    table: &'a GuardTable,
    key: String,
    token: u64,
}

impl GuardTable {
    pub fn new(ttl: Duration, wait: Duration) -> Self {
        GuardTable {
            shards: (0..SHARDS).map(|_| Shard::default()).collect(),
            ttl,
            wait,
            next_token: AtomicU64::new(1),
            counters: Counters::default(),
        }
    }

    fn shard(&self, key: &str) -> &Shard {
        let mut h = DefaultHasher::new();
        key.hash(&mut h);
        &self.shards[(h.finish() as usize) % SHARDS]
    }

    /// Blocks up to the configured wait. A holder older than the TTL is
    /// treated as dead and displaced.
    pub fn acquire(&self, key: &str) -> Option<GuardHandle<'_>> {
        let shard = self.shard(key);
        let deadline = Instant::now() + self.wait;
        let token = self.next_token.fetch_add(1, Ordering::Relaxed);
        let mut held = shard.held.lock();
        loop {
            let now = Instant::now();
            let wake_at = match held.get(key) {
                None => break,
                Some(h) if now.duration_since(h.acquired) >= self.ttl => {
                    Counters::bump(&self.counters.expired_takeovers);
                    break;
                }
                Some(h) => h.acquired + self.ttl,
            };
            if now >= deadline {
                Counters::bump(&self.counters.timeouts);
                return None;
            }
            shard.released.wait_until(&mut held, wake_at.min(deadline));
        }
        held.insert(key.to_string(), Holder { token, acquired: Instant::now() });
        Counters::bump(&self.counters.acquisitions);
        Some(GuardHandle {
            table: self,
            key: key.to_string(),
            token,
        })
    }
}

impl GuardHandle<'_> {
    pub fn still_held(&self) -> bool {
        let held = self.table.shard(&self.key).held.lock();
        held.get(&self.key).is_some_and(|h| h.token == self.token)
    }
}

impl Drop for GuardHandle<'_> {
    fn drop(&mut self) {
        let shard = self.table.shard(&self.key);
        let mut held = shard.held.lock();
        if held.get(&self.key).is_some_and(|h| h.token == self.token) {
            held.remove(&self.key);
        }
        drop(held);
        shard.released.notify_all();
    }
}
