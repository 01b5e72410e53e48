//! Binary snapshot of the identity store.
//!
//! ```text
//! "PDIDSNAP" | version u16 | flags u16 | payload_len u64 | payload | crc32(payload) u32
//! ```
//!
//! All integers are big-endian. Strings are a u32 length followed by UTF-8.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use uuid::Uuid;

use super::record::*;
use super::store::{Inner, LegacyRecord, StoreError};
use super::Pdid;
use crate::mac::{MacAddress, Oui};
use crate::time::Timestamp;

pub const MAGIC: &[u8; 8] = b"PDIDSNAP";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 8 + 2 + 2 + 8;

pub(super) struct SnapshotData {
    records: Vec<DeviceRecord>,
    aliases: Vec<(Pdid, Pdid)>,
    legacy: Vec<LegacyRecord>,
    next_seq: u64,
}

impl SnapshotData {
    pub(super) fn capture(inner: &Inner) -> Self {
        let mut records: Vec<DeviceRecord> = inner.records.values().cloned().collect();
        records.sort_by_key(|r| r.created_seq);
        let mut aliases: Vec<(Pdid, Pdid)> = inner.aliases.iter().map(|(a, b)| (*a, *b)).collect();
        aliases.sort();
        SnapshotData {
            records,
            aliases,
            legacy: inner.legacy.values().cloned().collect(),
            next_seq: inner.next_seq,
        }
    }

    pub(super) fn restore(self, inner: &mut Inner) {
        inner.records = self.records.into_iter().map(|r| (r.pdid, r)).collect::<HashMap<_, _>>();
        inner.aliases = self.aliases.into_iter().collect();
        inner.legacy = self.legacy.into_iter().map(|l| (l.mac, l)).collect();
        inner.next_seq = self.next_seq;
    }
}

pub(super) fn write_file(path: &Path, data: &SnapshotData) -> std::io::Result<()> {
    let bytes = encode(data);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub(super) fn read_file(path: &Path) -> Result<SnapshotData, StoreError> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

fn encode(data: &SnapshotData) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(data.records.len() as u32);
    for r in &data.records {
        put_record(&mut w, r);
    }
    w.u32(data.aliases.len() as u32);
    for (from, into) in &data.aliases {
        w.raw(from.as_bytes());
        w.raw(into.as_bytes());
    }
    w.u32(data.legacy.len() as u32);
    for l in &data.legacy {
        w.raw(&l.mac.octets());
        put_profile(&mut w, &l.profile);
        w.u64(l.first_seen.0);
        w.u64(l.last_seen.0);
        w.u32(l.sessions.len() as u32);
        for s in &l.sessions {
            w.str(s);
        }
    }
    w.u64(data.next_seq);
    let payload = w.0;

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_be_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_be_bytes());
    out
}

fn decode(bytes: &[u8]) -> Result<SnapshotData, StoreError> {
    let corrupt = |m: &str| StoreError::CorruptSnapshot(m.to_string());
    if bytes.len() < HEADER_LEN + 4 {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_be_bytes([bytes[8], bytes[9]]);
    if version != VERSION {
        return Err(StoreError::CorruptSnapshot(format!("unsupported version {version}")));
    }
    let len = u64::from_be_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() != HEADER_LEN + len + 4 {
        return Err(corrupt("length mismatch"));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
    let crc = u32::from_be_bytes(bytes[HEADER_LEN + len..].try_into().unwrap());
    if crc32fast::hash(payload) != crc {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: payload, pos: 0 };
    let data = read_payload(&mut r).map_err(|m| StoreError::CorruptSnapshot(m.to_string()))?;
    if r.pos != payload.len() {
        return Err(corrupt("trailing payload bytes"));
    }
    Ok(data)
}

fn read_payload(r: &mut Reader) -> Result<SnapshotData, &'static str> {
    let n = r.count()?;
    let mut records = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        records.push(get_record(r)?);
    }
    let n = r.count()?;
    let mut aliases = Vec::new();
    for _ in 0..n {
        aliases.push((r.pdid()?, r.pdid()?));
    }
    let n = r.count()?;
    let mut legacy = Vec::new();
    for _ in 0..n {
        let mac = r.mac()?;
        let profile = get_profile(r)?;
        let first_seen = Timestamp(r.u64()?);
        let last_seen = Timestamp(r.u64()?);
        let k = r.count()?;
        let mut sessions = Vec::new();
        for _ in 0..k {
            sessions.push(r.str()?);
        }
        legacy.push(LegacyRecord {
            mac,
            profile,
            first_seen,
            last_seen,
            sessions,
        });
    }
    let next_seq = r.u64()?;
    Ok(SnapshotData {
        records,
        aliases,
        legacy,
        next_seq,
    })
}

fn put_record(w: &mut Writer, r: &DeviceRecord) {
    w.raw(r.pdid.as_bytes());
    w.u64(r.created_seq);
    w.u64(r.created_at.0);
    w.u64(r.last_seen.0);
    w.u8(r.ephemeral as u8 | (r.provisional as u8) << 1 | (r.flagged as u8) << 2);
    w.u32(r.macs.len() as u32);
    for m in &r.macs {
        w.raw(&m.mac.octets());
        w.u64(m.first_seen.0);
        w.u64(m.last_seen.0);
    }
    w.u32(r.anchors.len() as u32);
    for (k, v) in &r.anchors {
        w.u8(k.to_u8());
        w.str(v);
    }
    put_profile(w, &r.profile);
    w.u32(r.fingerprints.len() as u32);
    for f in &r.fingerprints {
        w.str(f.as_str());
    }
    w.u32(r.contexts.len() as u32);
    for c in &r.contexts {
        w.str(&c.context.nas_id);
        w.str(&c.context.port);
        w.u64(c.last_seen.0);
    }
    match &r.historical_oui {
        None => w.u8(0),
        Some(h) => {
            w.u8(1);
            w.raw(&h.oui.0);
            match &h.vendor {
                None => w.u8(0),
                Some(v) => {
                    w.u8(1);
                    w.str(v);
                }
            }
        }
    }
}

fn get_record(r: &mut Reader) -> Result<DeviceRecord, &'static str> {
    let pdid = r.pdid()?;
    let created_seq = r.u64()?;
    let created_at = Timestamp(r.u64()?);
    let last_seen = Timestamp(r.u64()?);
    let flags = r.u8()?;
    if flags & !0b111 != 0 {
        return Err("unknown record flags");
    }
    let n = r.count()?;
    let mut macs = Vec::new();
    for _ in 0..n {
        macs.push(MacEntry {
            mac: r.mac()?,
            first_seen: Timestamp(r.u64()?),
            last_seen: Timestamp(r.u64()?),
        });
    }
    let n = r.count()?;
    let mut anchors = BTreeMap::new();
    for _ in 0..n {
        let kind = AnchorKind::from_u8(r.u8()?).ok_or("unknown anchor kind")?;
        anchors.insert(kind, r.str()?);
    }
    let profile = get_profile(r)?;
    let n = r.count()?;
    let mut fingerprints = Vec::new();
    for _ in 0..n {
        fingerprints.push(Fingerprint(r.str()?));
    }
    let n = r.count()?;
    let mut contexts = Vec::new();
    for _ in 0..n {
        let nas_id = r.str()?;
        let port = r.str()?;
        contexts.push(ContextEntry {
            context: NetworkContext { nas_id, port },
            last_seen: Timestamp(r.u64()?),
        });
    }
    let historical_oui = match r.u8()? {
        0 => None,
        1 => {
            let b = r.take(3)?;
            let oui = Oui([b[0], b[1], b[2]]);
            let vendor = match r.u8()? {
                0 => None,
                1 => Some(r.str()?),
                _ => return Err("bad vendor tag"),
            };
            Some(HistoricalOui { oui, vendor })
        }
        _ => return Err("bad oui tag"),
    };
    Ok(DeviceRecord {
        pdid,
        macs,
        anchors,
        profile,
        fingerprints,
        contexts,
        created_at,
        last_seen,
        ephemeral: flags & 1 != 0,
        provisional: flags & 2 != 0,
        flagged: flags & 4 != 0,
        historical_oui,
        created_seq,
    })
}

fn put_profile(w: &mut Writer, p: &BTreeMap<String, ProfileEntry>) {
    w.u32(p.len() as u32);
    for (k, e) in p {
        w.str(k);
        w.str(&e.value);
        w.u8(e.source.to_u8());
        w.u64(e.t.0);
        w.u32(e.history.len() as u32);
        for h in &e.history {
            w.str(&h.value);
            w.u8(h.source.to_u8());
            w.u64(h.t.0);
        }
    }
}

fn get_profile(r: &mut Reader) -> Result<BTreeMap<String, ProfileEntry>, &'static str> {
    let n = r.count()?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let key = r.str()?;
        let value = r.str()?;
        let source = r.source()?;
        let t = Timestamp(r.u64()?);
        let k = r.count()?;
        let mut history = Vec::new();
        for _ in 0..k {
            history.push(HistoryEntry {
                value: r.str()?,
                source: r.source()?,
                t: Timestamp(r.u64()?),
            });
        }
        out.insert(key, ProfileEntry { value, source, t, history });
    }
    Ok(out)
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn raw(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.raw(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.raw(&v.to_be_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.raw(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], &'static str> {
        let end = self.pos.checked_add(n).ok_or("length overflow")?;
        let s = self.buf.get(self.pos..end).ok_or("truncated payload")?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, &'static str> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, &'static str> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, &'static str> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&mut self) -> Result<usize, &'static str> {
        let n = self.u32()? as usize;
        if n > self.buf.len() - self.pos {
            return Err("count exceeds payload");
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, &'static str> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| "invalid utf-8")
    }
    fn pdid(&mut self) -> Result<Pdid, &'static str> {
        let b: [u8; 16] = self.take(16)?.try_into().unwrap();
        Pdid::from_uuid(Uuid::from_bytes(b)).ok_or("invalid pdid")
    }
    fn mac(&mut self) -> Result<MacAddress, &'static str> {
        let b: [u8; 6] = self.take(6)?.try_into().unwrap();
        Ok(MacAddress::new(b))
    }
    fn source(&mut self) -> Result<AttributeSource, &'static str> {
        AttributeSource::from_u8(self.u8()?).ok_or("unknown attribute source")
    }
}
