//! Operator command line.
//!
//! Exit codes: 0 success (or every scenario expectation held), 1 domain
//! error (unknown PDID, failed expectation), 2 bad input (config, scenario,
//! arguments), 3 environment (bind failure, I/O, store locked).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::identity::{AuditLog, DeviceRecord, IdentityStore, Pdid, StoreError};
use crate::mac::OuiRegistry;
use crate::profiler::{classify, default_rules};
use crate::service::{audit_trail, AuthService, ServerConfig, ServiceError};
use crate::sim::{Format, Scenario, ScenarioError, SimError, SimOptions, Simulation, TransportKind};
use crate::time::Timestamp;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ENVIRONMENT: i32 = 3;

const ACTOR: &str = "admin-cli";
const PRUNE_EVERY: Duration = Duration::from_secs(3600);

#[derive(Debug, Parser)]
#[command(name = "pdid", version, about = "Persistent device identifiers for RADIUS network access control")]
pub struct Cli {
    /// Server configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Store snapshot; overrides `store` in the configuration.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Seed for `simulate`; overrides the scenario's own.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    License,
    Inventory,
    Audit,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the RADIUS server until interrupted, then save the store.
    Serve,
    /// Play a scenario file and report; exits 1 if an expectation fails.
    Simulate {
        scenario: PathBuf,
        /// Send datagrams over real UDP instead of in-process calls.
        #[arg(long)]
        udp: bool,
    },
    /// License counts, device inventory, or one device's audit trail.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
        /// The device for `audit`.
        pdid: Option<String>,
    },
    /// List stored device records.
    StoreList,
    /// Delete a device record and everything it holds.
    StoreDelete { pdid: String },
    /// Remove records idle past their retention.
    StorePrune {
        /// Current time in Unix seconds, instead of the clock.
        #[arg(long)]
        now: Option<u64>,
    },
    /// Print the effective configuration with secrets redacted.
    ConfigShow,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        let code = match &e {
            ServiceError::UnknownPdid(_) => EXIT_DOMAIN,
            ServiceError::Store(StoreError::UnknownPdid(_)) => EXIT_DOMAIN,
            ServiceError::Store(StoreError::Io(_)) | ServiceError::Audit(_) => EXIT_ENVIRONMENT,
            ServiceError::Config(crate::service::ConfigFileError::Io { .. }) => EXIT_ENVIRONMENT,
            _ => EXIT_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        ServiceError::from(e).into()
    }
}

/// Parses `args` (program name first) and runs the command, writing
/// results to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let level = if matches!(cli.command, Command::Serve) { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli, out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("pdid: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<ServerConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ServerConfig::load(p).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", p.display())))?,
        None => ServerConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())
        .map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    if let Some(s) = &cli.store {
        cfg.store_path = Some(s.clone());
    }
    if cfg.audit_log.is_none() {
        cfg.audit_log = cfg.store_path.as_deref().map(default_audit_path);
    }
    Ok(cfg)
}

/// Audit log kept beside a snapshot when none is configured.
pub fn default_audit_path(store: &Path) -> PathBuf {
    let mut s = store.as_os_str().to_owned();
    s.push(".audit.jsonl");
    PathBuf::from(s)
}

pub fn lock_path(store: &Path) -> PathBuf {
    let mut s = store.as_os_str().to_owned();
    s.push(".lock");
    PathBuf::from(s)
}

/// Lock file beside the snapshot, held while a server or a store
/// command owns it. Removed on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(store: &Path) -> Result<Self, Failure> {
        let path = lock_path(store);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(Failure::new(
                EXIT_ENVIRONMENT,
                format!(
                    "store {} is in use ({} exists); stop the server or remove a stale lock",
                    store.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(Failure::new(EXIT_ENVIRONMENT, format!("cannot create {}: {e}", path.display()))),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// The configured snapshot, which must exist.
fn store_path(cfg: &ServerConfig) -> Result<&Path, Failure> {
    let path = cfg
        .store_path
        .as_deref()
        .ok_or_else(|| Failure::new(EXIT_INPUT, "no store given; use --store or `store = ...` in the config"))?;
    if !path.exists() {
        return Err(Failure::new(EXIT_INPUT, format!("store snapshot {} does not exist", path.display())));
    }
    Ok(path)
}

fn open_store(cfg: &ServerConfig) -> Result<IdentityStore, Failure> {
    let path = store_path(cfg)?;
    let registry = Arc::new(match &cfg.oui_registry {
        Some(p) => OuiRegistry::load(p).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?,
        None => OuiRegistry::bundled(),
    });
    let audit = match &cfg.audit_log {
        Some(p) => AuditLog::open(p).map_err(|e| Failure::new(EXIT_ENVIRONMENT, format!("{}: {e}", p.display())))?,
        None => AuditLog::new(),
    };
    Ok(IdentityStore::load_snapshot(path, cfg.store.clone(), registry, Arc::new(audit))?)
}

fn save_store(store: &IdentityStore, cfg: &ServerConfig) -> Result<(), Failure> {
    store.save_snapshot(store_path(cfg)?)?;
    store
        .audit()
        .flush()
        .map_err(|e| Failure::new(EXIT_ENVIRONMENT, format!("audit log: {e}")))
}

fn parse_pdid(s: &str) -> Result<Pdid, Failure> {
    s.parse()
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{s:?} is not a PDID: {e}")))
}

fn emit(out: &mut dyn Write, format: OutputFormat, text: &str, json: &impl Serialize) -> Result<(), Failure> {
    let body = match format {
        OutputFormat::Text => text.to_string(),
        OutputFormat::Json => serde_json::to_string_pretty(json).expect("serializable") + "\n",
    };
    out.write_all(body.as_bytes())
        .map_err(|e| Failure::new(EXIT_ENVIRONMENT, format!("cannot write output: {e}")))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Serve => serve(load_config(cli)?).map(|_| EXIT_OK),
        Command::Simulate { scenario, udp } => simulate(cli, scenario, *udp, out),
        Command::Report { kind, pdid } => report(&load_config(cli)?, *kind, pdid.as_deref(), cli.format, out),
        Command::StoreList => store_list(&load_config(cli)?, cli.format, out),
        Command::StoreDelete { pdid } => store_delete(&load_config(cli)?, pdid, cli.format, out),
        Command::StorePrune { now } => store_prune(&load_config(cli)?, *now, cli.format, out),
        Command::ConfigShow => {
            let cfg = load_config(cli)?;
            emit(out, cli.format, &cfg.render(), &cfg.view())?;
            Ok(EXIT_OK)
        }
    }
}

fn serve(cfg: ServerConfig) -> Result<(), Failure> {
    let _lock = match &cfg.store_path {
        Some(p) => Some(StoreLock::acquire(p)?),
        None => None,
    };
    let store_path = cfg.store_path.clone();
    let service = Arc::new(AuthService::from_config(cfg)?);
    // Before the "listening" line, so a signal sent as soon as it appears is caught.
    let (tx, rx) = crossbeam_channel::bounded::<()>(1);
    ctrlc::set_handler(move || {
        let _ = tx.try_send(());
    })
    .map_err(|e| Failure::new(EXIT_ENVIRONMENT, format!("cannot install signal handler: {e}")))?;
    let handle = service
        .bind_udp()
        .map_err(|e| Failure::new(EXIT_ENVIRONMENT, format!("cannot bind RADIUS ports: {e}")))?;
    let (licenses, legacy) = (service.store().license_count(), service.store().legacy_count());
    log::info!(
        "listening on {} (auth) and {} (accounting); feature {}; {} persistent, {} ephemeral, {} legacy records",
        handle.auth_addr(),
        handle.acct_addr(),
        if service.store().feature_enabled() { "on" } else { "off" },
        licenses.persistent,
        licenses.ephemeral,
        legacy
    );
    while let Err(crossbeam_channel::RecvTimeoutError::Timeout) = rx.recv_timeout(PRUNE_EVERY) {
        let n = service.store().prune(Timestamp::now(), "auth-service");
        log::info!("retention sweep pruned {n} record(s)");
    }
    log::info!("shutting down");
    handle.stop();
    if let Some(p) = &store_path {
        service.store().save_snapshot(p)?;
        log::info!("store saved to {}", p.display());
    }
    service
        .store()
        .audit()
        .flush()
        .map_err(|e| Failure::new(EXIT_ENVIRONMENT, format!("audit log: {e}")))
}

fn simulate(cli: &Cli, path: &Path, udp: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let scenario = Scenario::load(path).map_err(|e| match e {
        ScenarioError::Io { .. } => Failure::new(EXIT_INPUT, e.to_string()),
        _ => Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())),
    })?;
    let config = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let options = SimOptions {
        seed: cli.seed,
        transport: if udp { TransportKind::Udp } else { TransportKind::Loopback },
        config,
    };
    let outcome = Simulation::new(scenario, options)
        .and_then(Simulation::run)
        .map_err(|e| match e {
            SimError::Scenario(_) | SimError::Service(_) => Failure::new(EXIT_INPUT, e.to_string()),
            SimError::Io(_) => Failure::new(EXIT_ENVIRONMENT, e.to_string()),
        })?;
    let format = match cli.format {
        OutputFormat::Text => Format::Text,
        OutputFormat::Json => Format::Json,
    };
    out.write_all(outcome.report.render(format).as_bytes())
        .map_err(|e| Failure::new(EXIT_ENVIRONMENT, e.to_string()))?;
    Ok(if outcome.report.passed { EXIT_OK } else { EXIT_DOMAIN })
}

#[derive(Serialize)]
struct InventoryRow {
    pdid: Pdid,
    macs: usize,
    class: Option<String>,
    anchors: Vec<&'static str>,
    ephemeral: bool,
    flagged: bool,
    last_seen: u64,
}

fn inventory(store: &IdentityStore) -> Vec<InventoryRow> {
    let rules = default_rules();
    store
        .records()
        .iter()
        .map(|r: &DeviceRecord| InventoryRow {
            pdid: r.pdid,
            macs: r.macs.len(),
            class: classify(r, &rules, store.registry()),
            anchors: r.anchors.keys().map(|k| k.as_str()).collect(),
            ephemeral: r.ephemeral,
            flagged: r.flagged,
            last_seen: r.last_seen.secs(),
        })
        .collect()
}

fn inventory_text(rows: &[InventoryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<36}  {:>4}  {:<16}  {:<10}  anchors", "pdid", "macs", "class", "kind");
    for r in rows {
        let kind = match (r.ephemeral, r.flagged) {
            (true, _) => "ephemeral",
            (false, true) => "flagged",
            (false, false) => "persistent",
        };
        let _ = writeln!(
            s,
            "{:<36}  {:>4}  {:<16}  {:<10}  {}",
            r.pdid.to_string(),
            r.macs,
            r.class.as_deref().unwrap_or("-"),
            kind,
            if r.anchors.is_empty() { "-".to_string() } else { r.anchors.join(",") }
        );
    }
    let _ = writeln!(s, "{} record(s)", rows.len());
    s
}

fn report(
    cfg: &ServerConfig,
    kind: ReportKind,
    selector: Option<&str>,
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let store = open_store(cfg)?;
    match kind {
        ReportKind::License => {
            let c = store.license_count();
            let text = format!("persistent: {}, ephemeral: {}\n", c.persistent, c.ephemeral);
            emit(out, format, &text, &c)?;
        }
        ReportKind::Inventory => {
            let rows = inventory(&store);
            emit(out, format, &inventory_text(&rows), &rows)?;
        }
        ReportKind::Audit => {
            let pdid = parse_pdid(selector.ok_or_else(|| Failure::new(EXIT_INPUT, "report audit needs a PDID"))?)?;
            let trail = audit_trail(&store, pdid)?;
            let mut text = String::new();
            for e in &trail {
                let _ = writeln!(
                    text,
                    "{} {:>20} {:<22} {} {}",
                    e.seq,
                    e.t.secs(),
                    serde_json::to_value(e.op).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    e.actor,
                    e.detail
                );
            }
            emit(out, format, &text, &trail)?;
        }
    }
    Ok(EXIT_OK)
}

fn store_list(cfg: &ServerConfig, format: OutputFormat, out: &mut dyn Write) -> Result<i32, Failure> {
    let _lock = StoreLock::acquire(store_path(cfg)?)?;
    let store = open_store(cfg)?;
    let rows = inventory(&store);
    emit(out, format, &inventory_text(&rows), &rows)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Count {
    #[serde(skip_serializing_if = "Option::is_none")]
    deleted: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pruned: Option<usize>,
}

fn store_delete(cfg: &ServerConfig, pdid: &str, format: OutputFormat, out: &mut dyn Write) -> Result<i32, Failure> {
    let pdid = parse_pdid(pdid)?;
    let _lock = StoreLock::acquire(store_path(cfg)?)?;
    let store = open_store(cfg)?;
    if !store.delete_pdid(pdid, Timestamp::now(), ACTOR) {
        return Err(Failure::new(EXIT_DOMAIN, format!("unknown PDID {pdid}")));
    }
    save_store(&store, cfg)?;
    let c = Count {
        deleted: Some(1),
        pruned: None,
    };
    emit(out, format, "deleted 1\n", &c)?;
    Ok(EXIT_OK)
}

fn store_prune(cfg: &ServerConfig, now: Option<u64>, format: OutputFormat, out: &mut dyn Write) -> Result<i32, Failure> {
    let _lock = StoreLock::acquire(store_path(cfg)?)?;
    let store = open_store(cfg)?;
    let now = now.map(Timestamp).unwrap_or_else(Timestamp::now);
    let n = store.prune(now, ACTOR);
    save_store(&store, cfg)?;
    let c = Count {
        deleted: None,
        pruned: Some(n),
    };
    emit(out, format, &format!("pruned {n}\n"), &c)?;
    Ok(EXIT_OK)
}
