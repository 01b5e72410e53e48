//! Deterministic fleet simulation.
//!
//! A scenario describes device groups and a schedule. The simulator plays
//! the NAS side: it encodes real Access- and Accounting-Requests, sends them
//! through a transport to an [`AuthService`], feeds DHCP observations to the
//! profiler, and scores the resulting identifiers against ground truth.

mod metrics;
mod report;
mod scenario;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::{Arc, Barrier};
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use metrics::{partition_metrics, AuthRecord, EventSetMismatch, Metrics, Pairwise, UseCaseRow};
pub use report::{is_metric_name, metric_value, ExpectResult, Format, Report};
pub use scenario::{
    model_attrs, next_mac, Action, DeviceGroup, Expectation, Scenario, ScenarioError, ScheduledEvent, SimDevice,
    Strategy, UseCase,
};

use crate::correlator::Correlator;
use crate::identity::{AuditLog, IdentityStore, NetworkContext, ObservationKind, Pdid};
use crate::mac::{MacAddress, OuiRegistry};
use crate::profiler::Observation;
use crate::radius::{
    attr, decode_packet, encode_accounting_request, encode_packet, encode_vsa, find_pdids, verify_response, Attribute,
    Code, RadiusPacket, SharedSecret, VendorType, SERVICE_TYPE_CALL_CHECK,
};
use crate::service::{AuthService, NasClient, ServerConfig, ServerHandle, ServiceError};
use crate::time::Timestamp;

/// Scenario time zero.
pub const SIM_EPOCH: u64 = 1_700_000_000;
pub const SIM_SECRET: &str = "sim-secret";
const SWITCH_ADDR: IpAddr = IpAddr::V4(Ipv4Addr::new(192, 0, 2, 1));
const VPN_GW_ADDR: IpAddr = IpAddr::V4(Ipv4Addr::new(192, 0, 2, 2));
const SERVICE_TYPE_FRAMED: u32 = 2;
const ACTOR: &str = "simulator";

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("udp transport: {0}")]
    Io(#[from] std::io::Error),
}

/// Carries datagrams from the simulated NAS to the service.
pub trait Transport: Send + Sync {
    fn exchange(&self, datagram: &[u8], from: SocketAddr, accounting: bool, now: Timestamp) -> Option<Vec<u8>>;

    /// The time the service will see for scenario time `t`.
    fn clock(&self, t: Timestamp) -> Timestamp {
        t
    }
}

/// Direct in-process calls into the sans-IO handler, on scenario time.
pub struct Loopback(pub Arc<AuthService>);

impl Transport for Loopback {
    fn exchange(&self, datagram: &[u8], from: SocketAddr, _accounting: bool, now: Timestamp) -> Option<Vec<u8>> {
        self.0.handle_datagram(datagram, from, now)
    }
}

/// Real UDP to a running server. The server keeps wall-clock time, so time
/// based behavior (windows, pruning) is not reproducible in this mode.
pub struct UdpTransport {
    pub auth: SocketAddr,
    pub acct: SocketAddr,
    pub timeout: Duration,
    pub attempts: u32,
}

impl Transport for UdpTransport {
    fn exchange(&self, datagram: &[u8], _from: SocketAddr, accounting: bool, _now: Timestamp) -> Option<Vec<u8>> {
        let to = if accounting { self.acct } else { self.auth };
        let sock = UdpSocket::bind((to.ip(), 0)).ok()?;
        sock.set_read_timeout(Some(self.timeout)).ok()?;
        let mut buf = [0u8; 4096];
        for _ in 0..self.attempts.max(1) {
            sock.send_to(datagram, to).ok()?;
            if let Ok((n, _)) = sock.recv_from(&mut buf) {
                return Some(buf[..n].to_vec());
            }
        }
        None
    }

    fn clock(&self, _t: Timestamp) -> Timestamp {
        Timestamp::now()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    #[default]
    Loopback,
    Udp,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    pub transport: TransportKind,
    /// Service settings; NAS clients and persistence paths are replaced.
    pub config: Option<ServerConfig>,
}

enum Reply {
    Accept(Vec<Pdid>),
    Reject,
    Unanswered,
    Forged,
}

pub struct SimOutcome {
    pub report: Report,
    pub service: Arc<AuthService>,
    pub devices: Vec<SimDevice>,
    pub auths: Vec<AuthRecord>,
}

pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    devices: Vec<SimDevice>,
    service: Arc<AuthService>,
    transport: Box<dyn Transport>,
    server: Option<ServerHandle>,
    secret: SharedSecret,
    rng: ChaCha20Rng,
    next_id: u8,
    connections: HashMap<(usize, String), u32>,
    session_seq: u64,
    auths: Vec<AuthRecord>,
    macs: BTreeSet<(UseCase, MacAddress)>,
    dhcp: usize,
    accepts: usize,
    rejects: usize,
    unanswered: usize,
    forged: usize,
    violations: usize,
}

impl Simulation {
    pub fn new(scenario: Scenario, options: SimOptions) -> Result<Self, SimError> {
        scenario.validate()?;
        let seed = options.seed.unwrap_or(scenario.seed);
        let secret = SharedSecret::new(SIM_SECRET).expect("non-empty secret");
        let mut config = options.config.unwrap_or_default();
        config.store.feature_enabled = scenario.feature_enabled;
        config.store_path = None;
        config.audit_log = None;
        config.nas_clients = match options.transport {
            TransportKind::Loopback => vec![
                NasClient {
                    name: "switch".into(),
                    address: SWITCH_ADDR,
                    secret: secret.clone(),
                },
                NasClient {
                    name: "vpn-gw".into(),
                    address: VPN_GW_ADDR,
                    secret: secret.clone(),
                },
            ],
            TransportKind::Udp => vec![NasClient {
                name: "sim-nas".into(),
                address: IpAddr::V4(Ipv4Addr::LOCALHOST),
                secret: secret.clone(),
            }],
        };
        let registry = Arc::new(match &config.oui_registry {
            Some(p) => OuiRegistry::load(p).map_err(ServiceError::from)?,
            None => OuiRegistry::bundled(),
        });
        let store = IdentityStore::with_parts(config.store.clone(), registry, Arc::new(AuditLog::new()))
            .map_err(|e| ServiceError::Store(e.into()))?;
        let correlator = Arc::new(Correlator::with_seed(Arc::new(store), config.correlator.clone(), seed));
        let (transport, server, service): (Box<dyn Transport>, _, _) = match options.transport {
            TransportKind::Loopback => {
                let service = Arc::new(AuthService::with_correlator(config, correlator));
                (Box::new(Loopback(Arc::clone(&service))), None, service)
            }
            TransportKind::Udp => {
                config.bind_address = IpAddr::V4(Ipv4Addr::LOCALHOST);
                config.auth_port = 0;
                config.acct_port = 0;
                let service = Arc::new(AuthService::with_correlator(config, correlator));
                let handle = service.bind_udp()?;
                let t = UdpTransport {
                    auth: handle.auth_addr(),
                    acct: handle.acct_addr(),
                    timeout: Duration::from_secs(2),
                    attempts: 3,
                };
                (Box::new(t), Some(handle), service)
            }
        };
        Ok(Simulation {
            devices: scenario.devices(),
            scenario,
            seed,
            service,
            transport,
            server,
            secret,
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0x05ee_d0ff_1ee7),
            next_id: 0,
            connections: HashMap::new(),
            session_seq: 0,
            auths: Vec::new(),
            macs: BTreeSet::new(),
            dhcp: 0,
            accepts: 0,
            rejects: 0,
            unanswered: 0,
            forged: 0,
            violations: 0,
        })
    }

    pub fn service(&self) -> &Arc<AuthService> {
        &self.service
    }

    pub fn devices(&self) -> &[SimDevice] {
        &self.devices
    }

    /// Plays the whole schedule, then scores the result.
    pub fn run(mut self) -> Result<SimOutcome, SimError> {
        for (at, action) in self.scenario.timeline() {
            self.step(Timestamp(SIM_EPOCH + at), &action)?;
        }
        if let Some(h) = self.server.take() {
            h.stop();
        }
        let metrics = self.metrics();
        let report = Report::new(&self.scenario.name, self.seed, metrics, &self.scenario.expect);
        let store = self.service.store();
        let auths = self
            .auths
            .into_iter()
            .map(|a| AuthRecord {
                pdid: a.pdid.map(|p| store.resolve(p)),
                ..a
            })
            .collect();
        Ok(SimOutcome {
            report,
            service: self.service,
            devices: self.devices,
            auths,
        })
    }

    fn step(&mut self, t: Timestamp, action: &Action) -> Result<(), SimError> {
        let network_of = |n: &Option<String>, s: &Scenario| n.clone().unwrap_or_else(|| s.networks[0].clone());
        match action {
            Action::Connect {
                devices,
                network,
                accounting,
                ..
            }
            | Action::Reconnect {
                devices,
                network,
                accounting,
                ..
            } => {
                let net = network_of(network, &self.scenario);
                for i in self.scenario.select(&self.devices, devices)? {
                    self.connect(i, &net, *accounting, t);
                }
            }
            Action::Dhcp { devices, network } => {
                let net = network_of(network, &self.scenario);
                for i in self.scenario.select(&self.devices, devices)? {
                    self.dhcp(i, &net, t);
                }
            }
            Action::Burst {
                devices,
                network,
                count,
            } => {
                let net = network_of(network, &self.scenario);
                for i in self.scenario.select(&self.devices, devices)? {
                    self.burst(i, &net, *count, t);
                }
            }
            Action::ToggleFeature { enabled } => self.service.store().set_feature_enabled(*enabled),
            Action::Prune => {
                let now = self.transport.clock(t);
                let n = self.service.store().prune(now, ACTOR);
                log::debug!("pruned {n} record(s) at {}", now.secs());
            }
        }
        Ok(())
    }

    fn new_connection(&mut self, device: usize, network: &str) -> MacAddress {
        let slot = self.connections.entry((device, network.to_string())).or_insert(0);
        *slot += 1;
        let mac = next_mac(&self.devices[device], network, *slot, self.seed);
        self.macs.insert((self.devices[device].use_case, mac));
        mac
    }

    fn current_mac(&mut self, device: usize, network: &str) -> MacAddress {
        let n = self.connections.get(&(device, network.to_string())).copied().unwrap_or(0);
        let mac = next_mac(&self.devices[device], network, n, self.seed);
        self.macs.insert((self.devices[device].use_case, mac));
        mac
    }

    fn nas_name(d: &SimDevice, network: &str) -> String {
        match &d.nas {
            Some(n) => n.clone(),
            None if d.use_case == UseCase::VpnPosture => "vpn-gw".to_string(),
            None => format!("{network}-sw"),
        }
    }

    fn source(&self, d: &SimDevice) -> SocketAddr {
        let ip = if d.use_case == UseCase::VpnPosture { VPN_GW_ADDR } else { SWITCH_ADDR };
        SocketAddr::new(ip, 50_000)
    }

    fn ident(&mut self) -> u8 {
        let id = self.next_id;
        self.next_id = self.next_id.wrapping_add(1);
        id
    }

    fn device_token(&self, d: &SimDevice, prefix: &str) -> String {
        let h = Sha256::digest(format!("{prefix}/{}", d.true_id).as_bytes());
        let hex: String = h[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!("{prefix}-{hex}")
    }

    fn context_attrs(d: &SimDevice, mac: MacAddress, network: &str) -> Vec<Attribute> {
        vec![
            Attribute::text(attr::NAS_IDENTIFIER, &Self::nas_name(d, network)),
            Attribute::text(attr::NAS_PORT_ID, &d.port),
            Attribute::text(attr::CALLING_STATION_ID, &mac.to_string().to_uppercase().replace(':', "-")),
        ]
    }

    /// The Access-Request a device of this use case sends.
    fn access_request(&mut self, device: usize, mac: MacAddress, network: &str) -> RadiusPacket {
        let d = &self.devices[device];
        let mut attrs = Self::context_attrs(d, mac, network);
        let vsa = |vt, v: &str| encode_vsa(vt, v.as_bytes()).expect("short VSA");
        let corporate_user = Attribute::text(attr::USER_NAME, &format!("{}@corp.example", d.true_id));
        let mut report_attrs = d.report_attrs;
        match d.use_case {
            UseCase::ByodCert => {
                attrs.push(corporate_user);
                attrs.push(vsa(VendorType::CertificateIdentity, &format!("CN={},O=corp.example", d.true_id)));
                attrs.push(vsa(VendorType::UseCaseHint, "dot1x"));
            }
            UseCase::Managed => {
                attrs.push(corporate_user);
                attrs.push(vsa(VendorType::MdmEnrollment, &self.device_token(d, "mdm")));
                attrs.push(vsa(VendorType::UseCaseHint, "dot1x"));
            }
            UseCase::VpnPosture | UseCase::NonVpnPosture => {
                attrs.push(corporate_user);
                attrs.push(vsa(VendorType::AgentId, &self.device_token(d, "agent")));
                let hint = if d.use_case == UseCase::VpnPosture { "vpn" } else { "dot1x" };
                attrs.push(vsa(VendorType::UseCaseHint, hint));
            }
            UseCase::GuestRegistered => {
                let user = d.username.clone().unwrap_or_else(|| format!("guest-{}", d.true_id));
                attrs.push(Attribute::text(attr::USER_NAME, &user));
                report_attrs = true;
            }
            UseCase::GuestHotspot => {
                attrs.push(vsa(VendorType::UseCaseHint, "guest-hotspot"));
            }
            UseCase::IotFixed | UseCase::IotRandomized => {
                let bare: String = mac.octets().iter().map(|b| format!("{b:02x}")).collect();
                attrs.push(Attribute::text(attr::USER_NAME, &bare));
                attrs.push(Attribute::integer(attr::SERVICE_TYPE, SERVICE_TYPE_CALL_CHECK));
            }
        }
        if !d.use_case.is_mab() {
            attrs.push(Attribute::integer(attr::SERVICE_TYPE, SERVICE_TYPE_FRAMED));
        }
        if report_attrs {
            for (k, v) in d.model_attrs() {
                attrs.push(vsa(VendorType::DeviceAttribute, &format!("{k}={v}")));
            }
        }
        let mut authenticator = [0u8; 16];
        self.rng.fill_bytes(&mut authenticator);
        let mut p = RadiusPacket::new(Code::AccessRequest, self.ident(), authenticator);
        p.attributes = attrs;
        p
    }

    fn send_access(
        transport: &dyn Transport,
        secret: &SharedSecret,
        request: &RadiusPacket,
        from: SocketAddr,
        now: Timestamp,
    ) -> Reply {
        let bytes = encode_packet(request).expect("simulated request encodes");
        let Some(raw) = transport.exchange(&bytes, from, false, now) else {
            return Reply::Unanswered;
        };
        let Ok(resp) = decode_packet(&raw) else {
            return Reply::Forged;
        };
        if resp.identifier != request.identifier || !verify_response(&resp, &request.authenticator, secret) {
            return Reply::Forged;
        }
        match resp.code {
            Code::AccessAccept => Reply::Accept(find_pdids(&resp.attributes)),
            Code::AccessReject => Reply::Reject,
            _ => Reply::Forged,
        }
    }

    /// Tallies one reply; returns the identifier an Accept carried.
    fn record(&mut self, device: usize, mac: MacAddress, reply: Reply, feature_on: bool) -> Option<Pdid> {
        let pdid = match reply {
            Reply::Accept(pdids) => {
                self.accepts += 1;
                let expected = usize::from(feature_on);
                if pdids.len() != expected {
                    self.violations += 1;
                }
                pdids.first().copied()
            }
            Reply::Reject => {
                self.rejects += 1;
                None
            }
            Reply::Unanswered => {
                self.unanswered += 1;
                None
            }
            Reply::Forged => {
                self.forged += 1;
                None
            }
        };
        self.auths.push(AuthRecord {
            device,
            use_case: self.devices[device].use_case,
            mac,
            pdid,
        });
        pdid
    }

    fn connect(&mut self, device: usize, network: &str, accounting: bool, t: Timestamp) {
        let mac = self.new_connection(device, network);
        let request = self.access_request(device, mac, network);
        let from = self.source(&self.devices[device]);
        let now = self.transport.clock(t);
        let feature_on = self.service.store().feature_enabled();
        let reply = Self::send_access(self.transport.as_ref(), &self.secret, &request, from, now);
        let accepted = matches!(reply, Reply::Accept(_));
        let pdid = self.record(device, mac, reply, feature_on);
        if accepted && accounting {
            self.session_seq += 1;
            let session = format!("{}-{}", self.devices[device].true_id, self.session_seq);
            self.account(device, mac, network, &session, 1, pdid, now);
            self.account(device, mac, network, &session, 2, pdid, now);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn account(
        &mut self,
        device: usize,
        mac: MacAddress,
        network: &str,
        session: &str,
        status: u32,
        pdid: Option<Pdid>,
        now: Timestamp,
    ) {
        let d = &self.devices[device];
        let mut attrs = Self::context_attrs(d, mac, network);
        attrs.push(Attribute::integer(attr::ACCT_STATUS_TYPE, status));
        attrs.push(Attribute::text(attr::ACCT_SESSION_ID, session));
        if status == 2 {
            attrs.push(Attribute::integer(attr::ACCT_INPUT_OCTETS, self.rng.next_u32() >> 8));
            attrs.push(Attribute::integer(attr::ACCT_OUTPUT_OCTETS, self.rng.next_u32() >> 8));
        }
        if let Some(p) = pdid {
            attrs.push(crate::radius::encode_pdid_attribute(p));
        }
        let from = self.source(d);
        let id = self.ident();
        let bytes = encode_accounting_request(id, attrs, &self.secret).expect("simulated request encodes");
        let request = decode_packet(&bytes).expect("own encoding decodes");
        match self.transport.exchange(&bytes, from, true, now).map(|r| decode_packet(&r)) {
            Some(Ok(resp)) if verify_response(&resp, &request.authenticator, &self.secret) => {}
            Some(_) => self.forged += 1,
            None => self.unanswered += 1,
        }
    }

    fn dhcp(&mut self, device: usize, network: &str, t: Timestamp) {
        let mac = self.current_mac(device, network);
        let d = &self.devices[device];
        let context = NetworkContext::new(Self::nas_name(d, network), d.port.clone());
        let mut obs = Observation::new(ObservationKind::Dhcp, mac, context, self.transport.clock(t));
        obs.attrs = d.model_attrs();
        obs.attrs.insert("hostname".to_string(), d.true_id.clone());
        self.dhcp += 1;
        if let Err(e) = self.service.profiler().ingest(&obs) {
            log::debug!("dhcp from {mac}: {e}");
        }
    }

    /// `count` first-contact requests from one connection, released at once.
    fn burst(&mut self, device: usize, network: &str, count: usize, t: Timestamp) {
        let mac = self.new_connection(device, network);
        let requests: Vec<RadiusPacket> = (0..count).map(|_| self.access_request(device, mac, network)).collect();
        let from = self.source(&self.devices[device]);
        let now = self.transport.clock(t);
        let feature_on = self.service.store().feature_enabled();
        let barrier = Barrier::new(count);
        let transport = self.transport.as_ref();
        let secret = &self.secret;
        let replies: Vec<Reply> = std::thread::scope(|s| {
            let handles: Vec<_> = requests
                .iter()
                .map(|req| {
                    let barrier = &barrier;
                    s.spawn(move || {
                        barrier.wait();
                        Self::send_access(transport, secret, req, from, now)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("burst thread")).collect()
        });
        for r in replies {
            self.record(device, mac, r, feature_on);
        }
    }

    fn metrics(&self) -> Metrics {
        let store = self.service.store();
        let resolved: Vec<AuthRecord> = self
            .auths
            .iter()
            .map(|a| AuthRecord {
                pdid: a.pdid.map(|p| store.resolve(p)),
                ..a.clone()
            })
            .collect();
        let all = metrics::tally(resolved.iter().enumerate());
        let mut use_cases = Vec::new();
        for uc in UseCase::ALL {
            let devices = self.devices.iter().filter(|d| d.use_case == uc).count();
            if devices == 0 {
                continue;
            }
            let t = metrics::tally(resolved.iter().enumerate().filter(|(_, a)| a.use_case == uc));
            use_cases.push(UseCaseRow {
                use_case: uc,
                label: uc.label(),
                devices,
                authentications: resolved.iter().filter(|a| a.use_case == uc).count(),
                distinct_macs: self.macs.iter().filter(|(u, _)| *u == uc).count(),
                pdids: t.pdids,
                precision: t.pairwise.precision,
                recall: t.pairwise.recall,
                success_rate: t.success,
                duplicate_pdids: t.duplicates,
            });
        }
        let licenses = store.license_count();
        let distinct_macs = self.macs.iter().map(|(_, m)| *m).collect::<BTreeSet<_>>().len();
        let groups: BTreeMap<_, _> = self.service.sessions().grouped(store);
        Metrics {
            devices: self.devices.len(),
            authentications: self.auths.len(),
            accepts: self.accepts,
            rejects: self.rejects,
            unanswered: self.unanswered,
            dhcp_observations: self.dhcp,
            distinct_macs,
            records_without_framework: distinct_macs,
            records_with_framework: licenses.persistent,
            persistent_pdids: licenses.persistent,
            ephemeral_pdids: licenses.ephemeral,
            duplicate_pdids: all.duplicates,
            pairwise_precision: all.pairwise.precision,
            pairwise_recall: all.pairwise.recall,
            ambiguity_flags: self.service.profiler().ambiguity_flags(),
            pdid_attribute_violations: self.violations,
            authenticator_failures: self.forged,
            session_groups: groups.len(),
            legacy_records: store.legacy_count(),
            migrations: self.service.stats().migrations,
            use_cases,
        }
    }
}

/// Builds the stack, plays `scenario` and scores it.
pub fn run_scenario(scenario: &Scenario, options: SimOptions) -> Result<SimOutcome, SimError> {
    Simulation::new(scenario.clone(), options)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(json: &str) -> Report {
        let s = Scenario::from_json(json).unwrap();
        run_scenario(&s, SimOptions::default()).unwrap().report
    }

    #[test]
    fn empty_scenario_reports_zeros() {
        let r = run(r#"{"name": "empty"}"#);
        let m = &r.metrics;
        assert_eq!((m.devices, m.authentications, m.distinct_macs, m.persistent_pdids), (0, 0, 0, 0));
        assert!(m.use_cases.is_empty());
        assert!(r.passed);
    }

    #[test]
    fn byod_rotation_collapses_to_devices() {
        let r = run(r#"{"name": "b", "seed": 3,
            "devices": [{"id": "byod", "count": 5, "use_case": "byod_cert"}],
            "schedule": [{"at": 0, "event": "connect", "devices": ["byod"], "repeat": 4, "interval": 600}]}"#);
        let m = &r.metrics;
        assert_eq!(m.distinct_macs, 20);
        assert_eq!(m.persistent_pdids, 5);
        assert_eq!(m.duplicate_pdids, 0);
        assert_eq!((m.pairwise_precision, m.pairwise_recall), (1.0, 1.0));
        assert_eq!(m.session_groups, 5);
        assert_eq!((m.pdid_attribute_violations, m.authenticator_failures), (0, 0));
    }

    #[test]
    fn feature_off_sends_no_identifier() {
        let r = run(r#"{"name": "off", "feature_enabled": false,
            "devices": [{"id": "cam", "count": 2, "use_case": "iot_fixed"}],
            "schedule": [{"at": 0, "event": "connect", "devices": ["*"], "repeat": 2, "interval": 60}]}"#);
        let m = &r.metrics;
        assert_eq!(m.accepts, 4);
        assert_eq!(m.pdid_attribute_violations, 0);
        assert_eq!(m.persistent_pdids, 0);
        assert_eq!(m.legacy_records, 2);
    }

    #[test]
    fn same_seed_same_json() {
        let json = r#"{"name": "d", "seed": 9,
            "devices": [{"id": "g", "count": 3, "use_case": "guest_registered"},
                        {"id": "h", "count": 2, "use_case": "guest_hotspot"}],
            "schedule": [{"at": 0, "event": "connect", "devices": ["*"], "repeat": 3, "interval": 100}]}"#;
        assert_eq!(run(json).render(Format::Json), run(json).render(Format::Json));
    }
}
