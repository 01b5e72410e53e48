//! The RADIUS service: a sans-IO request handler plus a UDP transport.

mod config;
mod sessions;
mod udp;

use std::collections::HashMap;
use std::net::{IpAddr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::Serialize;
use thiserror::Error;

pub use config::{format_duration, parse_duration, ConfigFileError, ConfigView, NasClient, NasView, ServerConfig};
pub use sessions::{AccountingUpdate, AcctStatus, SessionOwner, SessionRecord, SessionTable};
pub use udp::{ServerHandle, UdpServer};

use crate::correlator::{CorrelateError, Correlator, IdentitySignalSet, UseCaseHint};
use crate::identity::{
    AttributeSource, AuditEvent, AuditLog, AuditOp, IdentityStore, NetworkContext, NewRecord, ObservationKind, Pdid,
    StoreError,
};
use crate::mac::{MacAddress, OuiRegistry};
use crate::profiler::{fingerprint_attrs, Observation, ProfileError, Profiler};
use crate::radius::{
    attr, decode_packet, encode_pdid_attribute, encode_response, extract_signals, find_pdids, verify_accounting_request,
    Attribute, Code, RadiusPacket, SignalError,
};
use crate::time::Timestamp;

const ACTOR: &str = "auth-service";
/// Identical retransmissions inside this many seconds get the cached answer.
pub const RETRANSMIT_WINDOW_SECS: u64 = 5;
const CACHE_SWEEP_AT: usize = 4096;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown PDID {0}")]
    UnknownPdid(Pdid),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error("OUI registry: {0}")]
    Registry(#[from] crate::mac::RegistryError),
    #[error("audit log: {0}")]
    Audit(std::io::Error),
}

#[derive(Default)]
struct Counters {
    access_requests: AtomicU64,
    accepts: AtomicU64,
    rejects: AtomicU64,
    dropped: AtomicU64,
    accounting: AtomicU64,
    retransmits: AtomicU64,
    migrations: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ServiceStats {
    pub access_requests: u64,
    pub accepts: u64,
    pub rejects: u64,
    pub dropped: u64,
    pub accounting: u64,
    pub retransmits: u64,
    pub migrations: u64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

type CacheKey = (SocketAddr, u8, [u8; 16]);

/// Access outcome before encoding.
enum Decision {
    Accept(Option<Pdid>),
    Reject,
    Drop,
}

pub struct AuthService {
    config: ServerConfig,
    correlator: Arc<Correlator>,
    profiler: Arc<Profiler>,
    clients: HashMap<IpAddr, NasClient>,
    sessions: SessionTable,
    cache: Mutex<HashMap<CacheKey, (Timestamp, Vec<u8>)>>,
    counters: Counters,
}

impl AuthService {
    /// Builds the whole stack from configuration: registry, audit log, and a
    /// store loaded from the configured snapshot when one exists.
    pub fn from_config(config: ServerConfig) -> Result<Self, ServiceError> {
        let registry = Arc::new(match &config.oui_registry {
            Some(p) => OuiRegistry::load(p)?,
            None => OuiRegistry::bundled(),
        });
        let audit = Arc::new(match &config.audit_log {
            Some(p) => AuditLog::open(p).map_err(ServiceError::Audit)?,
            None => AuditLog::new(),
        });
        let store = match &config.store_path {
            Some(p) if p.exists() => IdentityStore::load_snapshot(p, config.store.clone(), registry, audit)?,
            _ => IdentityStore::with_parts(config.store.clone(), registry, audit).map_err(StoreError::from)?,
        };
        let correlator = Arc::new(Correlator::new(Arc::new(store), config.correlator.clone()));
        Ok(Self::with_correlator(config, correlator))
    }

    pub fn with_correlator(config: ServerConfig, correlator: Arc<Correlator>) -> Self {
        let profiler = Arc::new(Profiler::new(Arc::clone(&correlator), config.context_window));
        Self::with_parts(config, correlator, profiler)
    }

    pub fn with_parts(config: ServerConfig, correlator: Arc<Correlator>, profiler: Arc<Profiler>) -> Self {
        let clients = config.nas_clients.iter().map(|c| (c.address, c.clone())).collect();
        AuthService {
            config,
            correlator,
            profiler,
            clients,
            sessions: SessionTable::new(),
            cache: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<IdentityStore> {
        self.correlator.store()
    }

    pub fn correlator(&self) -> &Arc<Correlator> {
        &self.correlator
    }

    pub fn profiler(&self) -> &Arc<Profiler> {
        &self.profiler
    }

    pub fn sessions(&self) -> &SessionTable {
        &self.sessions
    }

    pub fn stats(&self) -> ServiceStats {
        let c = &self.counters;
        let g = |a: &AtomicU64| a.load(Ordering::Relaxed);
        ServiceStats {
            access_requests: g(&c.access_requests),
            accepts: g(&c.accepts),
            rejects: g(&c.rejects),
            dropped: g(&c.dropped),
            accounting: g(&c.accounting),
            retransmits: g(&c.retransmits),
            migrations: g(&c.migrations),
        }
    }

    /// Handles one datagram from `source` and returns the reply, if any.
    /// Unknown sources, undecodable packets and failed accounting
    /// authenticators produce no reply.
    pub fn handle_datagram(&self, bytes: &[u8], source: SocketAddr, now: Timestamp) -> Option<Vec<u8>> {
        let Some(client) = self.clients.get(&source.ip()) else {
            log::debug!("ignoring datagram from unconfigured source {source}");
            bump(&self.counters.dropped);
            return None;
        };
        let packet = match decode_packet(bytes) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("undecodable datagram from {source}: {e}");
                bump(&self.counters.dropped);
                return None;
            }
        };
        let key = (source, packet.identifier, packet.authenticator);
        if let Some((t, reply)) = self.cache.lock().get(&key) {
            if now.since(*t) <= RETRANSMIT_WINDOW_SECS && now >= *t {
                bump(&self.counters.retransmits);
                return Some(reply.clone());
            }
        }
        let reply = match packet.code {
            Code::AccessRequest => self.handle_access_request(&packet, client, now),
            Code::AccountingRequest => self.handle_accounting(&packet, client, now),
            other => {
                log::debug!("unexpected {other:?} from {source}");
                None
            }
        };
        match &reply {
            Some(r) => {
                let mut cache = self.cache.lock();
                if cache.len() >= CACHE_SWEEP_AT {
                    cache.retain(|_, (t, _)| now.since(*t) <= RETRANSMIT_WINDOW_SECS);
                }
                cache.insert(key, (now, r.clone()));
            }
            None => bump(&self.counters.dropped),
        }
        reply
    }

    fn proxy_states(p: &RadiusPacket) -> Vec<Attribute> {
        p.all(attr::PROXY_STATE).cloned().collect()
    }

    fn context_of(p: &RadiusPacket, client: &NasClient) -> NetworkContext {
        let nas_id = p
            .first(attr::NAS_IDENTIFIER)
            .and_then(Attribute::as_text)
            .map(str::to_string)
            .unwrap_or_else(|| client.name.clone());
        let port = p
            .first(attr::NAS_PORT_ID)
            .and_then(Attribute::as_text)
            .map(str::to_string)
            .or_else(|| p.first(attr::NAS_PORT).and_then(Attribute::as_integer).map(|n| n.to_string()))
            .unwrap_or_default();
        NetworkContext::new(nas_id, port)
    }

    /// Access-Request to encoded Access-Accept/Reject, or `None` to drop.
    pub fn handle_access_request(&self, p: &RadiusPacket, client: &NasClient, now: Timestamp) -> Option<Vec<u8>> {
        bump(&self.counters.access_requests);
        let decision = match extract_signals(p) {
            Err(SignalError::MalformedMac(raw)) => {
                log::info!("rejecting request with malformed Calling-Station-Id {raw:?}");
                Decision::Reject
            }
            Err(SignalError::NotARequest(_)) => Decision::Drop,
            Ok(mut signals) => {
                signals.fingerprint = fingerprint_attrs(&signals.device_attrs);
                let context = Self::context_of(p, client);
                self.decide(&signals, &context, now)
            }
        };
        let mut attrs = Vec::new();
        let code = match decision {
            Decision::Drop => return None,
            Decision::Reject => {
                bump(&self.counters.rejects);
                Code::AccessReject
            }
            Decision::Accept(pdid) => {
                bump(&self.counters.accepts);
                if let Some(pdid) = pdid {
                    attrs.push(encode_pdid_attribute(pdid));
                }
                Code::AccessAccept
            }
        };
        attrs.extend(Self::proxy_states(p));
        match encode_response(code, p.identifier, attrs, &p.authenticator, &client.secret) {
            Ok(bytes) => Some(bytes),
            Err(e) => {
                log::error!("cannot encode response: {e}");
                None
            }
        }
    }

    fn decide(&self, signals: &IdentitySignalSet, context: &NetworkContext, now: Timestamp) -> Decision {
        let store = self.store();
        if !store.feature_enabled() {
            return match signals.mac {
                Some(mac) => {
                    store.upsert_legacy(mac, &signals.device_attrs, AttributeSource::Authentication, now);
                    store
                        .audit()
                        .record(now, AuditOp::Authenticated, None, ACTOR, format!("legacy mac={mac}"));
                    Decision::Accept(None)
                }
                None if self.config.reject_unknown_signals => Decision::Reject,
                None => Decision::Accept(None),
            };
        }
        let pdid = match self.resolve_identity(signals, context, now) {
            Ok(p) => p,
            Err(CorrelateError::NoSignals) if self.config.reject_unknown_signals => return Decision::Reject,
            Err(CorrelateError::NoSignals) => {
                let new = NewRecord {
                    ephemeral: true,
                    context: Some(context.clone()),
                    ..NewRecord::default()
                };
                match self.correlator.create_record(new, now) {
                    Ok(r) => r.pdid,
                    Err(e) => {
                        log::error!("cannot create record: {e}");
                        return Decision::Drop;
                    }
                }
            }
            Err(e @ CorrelateError::GuardTimeout(_)) => {
                // No answer: the NAS retransmits and the retry finds the record.
                log::warn!("{e}");
                return Decision::Drop;
            }
            Err(e) => {
                log::error!("correlation failed: {e}");
                return Decision::Drop;
            }
        };
        let pdid = match signals.mac {
            Some(mac) => self.migrate_legacy(mac, pdid, now).unwrap_or(pdid),
            None => pdid,
        };
        let detail = match signals.mac {
            Some(m) => format!("mac={m}"),
            None => String::new(),
        };
        store.audit().record(now, AuditOp::Authenticated, Some(pdid), ACTOR, detail);
        Decision::Accept(Some(pdid))
    }

    /// Requests with an identity anchor, or flagged as hotspot, go to the
    /// correlator. Bare MAC requests (MAB) go through the profiler so they
    /// take part in cross-MAC merging.
    fn resolve_identity(
        &self,
        signals: &IdentitySignalSet,
        context: &NetworkContext,
        now: Timestamp,
    ) -> Result<Pdid, CorrelateError> {
        let anchored = signals.cert_id.is_some()
            || signals.mdm_id.is_some()
            || signals.agent_id.is_some()
            || signals.username.is_some();
        if anchored || signals.use_case_hint == Some(UseCaseHint::GuestHotspot) {
            return self
                .correlator
                .correlate_in(signals, Some(context), now)
                .map(|r| r.pdid);
        }
        let Some(mac) = signals.mac else {
            return Err(CorrelateError::NoSignals);
        };
        // The MAB itself is an observation: where the device plugged in.
        let mut attrs = signals.device_attrs.clone();
        attrs.insert("mab_nas".to_string(), context.nas_id.clone());
        attrs.insert("mab_port".to_string(), context.port.clone());
        let obs = Observation {
            kind: ObservationKind::RadiusMab,
            mac,
            context: context.clone(),
            t: now,
            attrs,
        };
        match self.profiler.ingest(&obs) {
            Ok(o) => Ok(o.pdid),
            Err(ProfileError::AmbiguousFingerprint { pdid, .. }) => Ok(pdid),
            Err(ProfileError::Correlate(e)) => Err(e),
            Err(e) => {
                log::error!("profiler: {e}");
                Err(CorrelateError::NoSignals)
            }
        }
    }

    /// Moves a MAC-keyed legacy record into `pdid`: profile with history,
    /// sessions, and the MAC itself. Runs at most once per legacy record.
    pub fn migrate_legacy(&self, mac: MacAddress, pdid: Pdid, now: Timestamp) -> Option<Pdid> {
        let store = self.store();
        let legacy = store.take_legacy(&mac)?;
        let rec = match store.absorb_legacy(pdid, &legacy) {
            Ok(r) => r,
            Err(e) => {
                log::error!("migration of {mac} failed: {e}");
                return None;
            }
        };
        let _ = store.associate_mac(rec.pdid, mac, now);
        let moved = self.sessions.rekey(mac, rec.pdid);
        bump(&self.counters.migrations);
        store.audit().record(
            now,
            AuditOp::Migrated,
            Some(rec.pdid),
            ACTOR,
            format!("mac={mac} attrs={} sessions={moved}", legacy.profile.len()),
        );
        Some(rec.pdid)
    }

    /// Correlates `signals` and folds in any legacy record for their MAC.
    pub fn migrate_record(
        &self,
        signals: &IdentitySignalSet,
        context: &NetworkContext,
        now: Timestamp,
    ) -> Result<Pdid, CorrelateError> {
        let pdid = self.resolve_identity(signals, context, now)?;
        Ok(match signals.mac {
            Some(mac) => self.migrate_legacy(mac, pdid, now).unwrap_or(pdid),
            None => pdid,
        })
    }

    /// Accounting-Request to encoded Accounting-Response, or `None` to drop.
    pub fn handle_accounting(&self, p: &RadiusPacket, client: &NasClient, now: Timestamp) -> Option<Vec<u8>> {
        if !verify_accounting_request(p, &client.secret) {
            log::warn!("accounting authenticator mismatch from nas {}", client.name);
            return None;
        }
        let status = p
            .first(attr::ACCT_STATUS_TYPE)
            .and_then(Attribute::as_integer)
            .and_then(AcctStatus::from_u32)?;
        let session_id = p.first(attr::ACCT_SESSION_ID).and_then(Attribute::as_text)?.to_string();
        bump(&self.counters.accounting);
        let mac = p
            .first(attr::CALLING_STATION_ID)
            .and_then(Attribute::as_text)
            .and_then(|t| MacAddress::parse(t).ok());
        let store = self.store();
        let owner = if store.feature_enabled() {
            let echoed = find_pdids(&p.attributes)
                .into_iter()
                .map(|p| store.resolve(p))
                .find(|p| store.contains(*p));
            match (echoed, mac.and_then(|m| store.lookup_by_mac(&m))) {
                (Some(p), _) => SessionOwner::Pdid(p),
                (None, Some(rec)) => SessionOwner::Pdid(rec.pdid),
                (None, None) => mac.map(SessionOwner::Mac).unwrap_or(SessionOwner::Unknown),
            }
        } else {
            if let Some(m) = mac {
                store.add_legacy_session(m, &session_id, now);
            }
            mac.map(SessionOwner::Mac).unwrap_or(SessionOwner::Unknown)
        };
        let counter = |t: u8| p.first(t).and_then(Attribute::as_integer).map(u64::from);
        let session = self.sessions.apply(AccountingUpdate {
            status,
            nas: &client.name,
            session_id: &session_id,
            owner,
            mac,
            input_octets: counter(attr::ACCT_INPUT_OCTETS),
            output_octets: counter(attr::ACCT_OUTPUT_OCTETS),
            t: now,
        });
        if let SessionOwner::Pdid(pdid) = session.owner {
            let op = match status {
                AcctStatus::Start => Some(AuditOp::SessionStart),
                AcctStatus::Stop => Some(AuditOp::SessionStop),
                AcctStatus::Interim => None,
            };
            if let Some(op) = op {
                let flag = if session.stop_without_start { " no-start" } else { "" };
                store
                    .audit()
                    .record(now, op, Some(pdid), ACTOR, format!("session={session_id}{flag}"));
            }
        }
        encode_response(
            Code::AccountingResponse,
            p.identifier,
            Self::proxy_states(p),
            &p.authenticator,
            &client.secret,
        )
        .ok()
    }

    /// Chronological audit events for a device, including events recorded
    /// under identifiers later folded into it.
    pub fn audit_trail(&self, pdid: Pdid) -> Result<Vec<AuditEvent>, ServiceError> {
        audit_trail(self.store(), pdid)
    }

    /// Runs the UDP transport on the configured ports until stopped.
    pub fn bind_udp(self: &Arc<Self>) -> std::io::Result<ServerHandle> {
        let c = &self.config;
        UdpServer::bind(
            Arc::clone(self),
            SocketAddr::new(c.bind_address, c.auth_port),
            SocketAddr::new(c.bind_address, c.acct_port),
            c.worker_threads,
        )?
        .spawn()
    }
}

/// Chronological audit events for a device and every identifier folded
/// into it.
pub fn audit_trail(store: &IdentityStore, pdid: Pdid) -> Result<Vec<AuditEvent>, ServiceError> {
    if !store.contains(pdid) {
        return Err(ServiceError::UnknownPdid(pdid));
    }
    Ok(store.audit().trail(&store.aliases_of(pdid)))
}
