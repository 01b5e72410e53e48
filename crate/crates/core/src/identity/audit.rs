//! Append-only audit log. Each event is one JSON object per line:
//! `{"seq":..,"t":..,"op":"..","pdid":"..","actor":"..","detail":".."}`.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::Pdid;
use crate::time::Timestamp;

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOp {
    Created,
    Authenticated,
    MacAssociated,
    MacEvicted,
    AnchorAdded,
    AnchorConflict,
    Folded,
    Migrated,
    AmbiguousFingerprint,
    SessionStart,
    SessionStop,
    Deleted,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub t: Timestamp,
    pub op: AuditOp,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pdid: Option<Pdid>,
    pub actor: String,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub detail: String,
}

#[derive(Default)]
struct Inner {
    events: Vec<AuditEvent>,
    next_seq: u64,
    sink: Option<File>,
}

/// In-memory event list with an optional file it mirrors every append to.
#[derive(Default)]
pub struct AuditLog {
    inner: Mutex<Inner>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads existing lines from `path` (if present) and appends new events to it.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref();
        let events = if path.exists() { read_events(path)? } else { Vec::new() };
        let next_seq = events.iter().map(|e| e.seq + 1).max().unwrap_or(0);
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            inner: Mutex::new(Inner {
                events,
                next_seq,
                sink: Some(sink),
            }),
        })
    }

    pub fn record(&self, t: Timestamp, op: AuditOp, pdid: Option<Pdid>, actor: &str, detail: impl Into<String>) {
        let mut inner = self.inner.lock();
        let event = AuditEvent {
            seq: inner.next_seq,
            t,
            op,
            pdid,
            actor: actor.to_string(),
            detail: detail.into(),
        };
        inner.next_seq += 1;
        if let Some(sink) = inner.sink.as_mut() {
            let line = serde_json::to_string(&event).expect("audit events serialize");
            if let Err(e) = writeln!(sink, "{line}") {
                log::error!("audit log write failed: {e}");
            }
        }
        inner.events.push(event);
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.inner.lock().events.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Events whose PDID is in `pdids`, ordered by time then sequence.
    pub fn trail(&self, pdids: &[Pdid]) -> Vec<AuditEvent> {
        let mut out: Vec<AuditEvent> = self
            .inner
            .lock()
            .events
            .iter()
            .filter(|e| e.pdid.is_some_and(|p| pdids.contains(&p)))
            .cloned()
            .collect();
        out.sort_by_key(|e| (e.t, e.seq));
        out
    }

    pub fn flush(&self) -> io::Result<()> {
        if let Some(sink) = self.inner.lock().sink.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }
}

pub fn read_events(path: impl AsRef<Path>) -> io::Result<Vec<AuditEvent>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("audit line {}: {e}", i + 1))
        })?;
        out.push(ev);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_and_sequence_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let pdid: Pdid = "00000000-0000-4000-8000-000000000001".parse().unwrap();
        {
            let log = AuditLog::open(&path).unwrap();
            log.record(Timestamp(5), AuditOp::Created, Some(pdid), "test", "");
            log.record(Timestamp(6), AuditOp::Deleted, Some(pdid), "admin", "decommissioned");
            log.flush().unwrap();
        }
        let log = AuditLog::open(&path).unwrap();
        log.record(Timestamp(7), AuditOp::Pruned, None, "admin", "");
        let events = read_events(&path).unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(events[2].seq, 2);
        assert_eq!(log.trail(&[pdid]).len(), 2);
    }

    #[test]
    fn trail_is_chronological() {
        let log = AuditLog::new();
        let pdid: Pdid = "00000000-0000-4000-8000-000000000001".parse().unwrap();
        log.record(Timestamp(9), AuditOp::SessionStop, Some(pdid), "a", "");
        log.record(Timestamp(3), AuditOp::Created, Some(pdid), "a", "");
        let t: Vec<u64> = log.trail(&[pdid]).iter().map(|e| e.t.0).collect();
        assert_eq!(t, vec![3, 9]);
    }
}
