//! Server configuration file.
//!
//! ```text
//! # comment
//! auth_port = 1812
//! feature_enabled = true
//! retention = 180d
//!
//! [nas "switch-1"]
//! address = 192.0.2.10
//! secret = s3cret
//! ```

use std::fmt::Write as _;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::correlator::CorrelatorConfig;
use crate::identity::{AnchorKind, StoreConfig};
use crate::radius::SharedSecret;

#[derive(Debug, Clone)]
pub struct NasClient {
    pub name: String,
    pub address: IpAddr,
    pub secret: SharedSecret,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind_address: IpAddr,
    pub auth_port: u16,
    pub acct_port: u16,
    pub nas_clients: Vec<NasClient>,
    pub reject_unknown_signals: bool,
    pub store: StoreConfig,
    pub correlator: CorrelatorConfig,
    pub context_window: Duration,
    pub worker_threads: usize,
    pub store_path: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub oui_registry: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind_address: IpAddr::from([0, 0, 0, 0]),
            auth_port: 1812,
            acct_port: 1813,
            nas_clients: Vec::new(),
            reject_unknown_signals: false,
            store: StoreConfig::default(),
            correlator: CorrelatorConfig::default(),
            context_window: Duration::from_secs(120),
            worker_threads: 4,
            store_path: None,
            audit_log: None,
            oui_registry: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn syntax(line: usize, reason: impl Into<String>) -> ConfigFileError {
    ConfigFileError::Syntax {
        line,
        reason: reason.into(),
    }
}

/// Parses `120s`, `5m`, `24h`, `180d` or a bare number of seconds.
pub fn parse_duration(s: &str) -> Option<Duration> {
    let s = s.trim();
    let (num, unit) = match s.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => s.split_at(i),
        None => (s, "s"),
    };
    let n: u64 = num.parse().ok()?;
    let mult = match unit.trim() {
        "s" => 1,
        "m" => 60,
        "h" => 3_600,
        "d" => 86_400,
        _ => return None,
    };
    n.checked_mul(mult).map(Duration::from_secs)
}

pub fn format_duration(d: Duration) -> String {
    let s = d.as_secs();
    if s != 0 && s.is_multiple_of(86_400) {
        format!("{}d", s / 86_400)
    } else if s != 0 && s.is_multiple_of(3_600) {
        format!("{}h", s / 3_600)
    } else {
        format!("{s}s")
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    v.strip_prefix('"').and_then(|x| x.strip_suffix('"')).unwrap_or(v)
}

struct PendingNas {
    name: String,
    line: usize,
    address: Option<IpAddr>,
    secret: Option<SharedSecret>,
}

impl PendingNas {
    fn finish(self) -> Result<NasClient, ConfigFileError> {
        let address = self
            .address
            .ok_or_else(|| syntax(self.line, format!("nas {:?} has no address", self.name)))?;
        let secret = self
            .secret
            .ok_or_else(|| syntax(self.line, format!("nas {:?} has no secret", self.name)))?;
        Ok(NasClient {
            name: self.name,
            address,
            secret,
        })
    }
}

impl ServerConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        let mut cfg = ServerConfig::default();
        let mut nas: Option<PendingNas> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(line_no, "unterminated section header"))?;
                let name = header
                    .trim()
                    .strip_prefix("nas")
                    .map(unquote)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| syntax(line_no, format!("unknown section [{header}]")))?;
                if let Some(done) = nas.take() {
                    cfg.nas_clients.push(done.finish()?);
                }
                nas = Some(PendingNas {
                    name: name.to_string(),
                    line: line_no,
                    address: None,
                    secret: None,
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(line_no, "expected key = value"))?;
            let key = key.trim();
            let value = unquote(value);
            if let Some(n) = nas.as_mut() {
                match key {
                    "address" => {
                        n.address = Some(value.parse().map_err(|_| syntax(line_no, format!("bad address {value:?}")))?)
                    }
                    "secret" => n.secret = Some(SharedSecret::new(value).ok_or_else(|| syntax(line_no, "empty secret"))?),
                    other => return Err(syntax(line_no, format!("unknown nas key {other:?}"))),
                }
                continue;
            }
            cfg.set(key, value).map_err(|reason| syntax(line_no, reason))?;
        }
        if let Some(done) = nas.take() {
            cfg.nas_clients.push(done.finish()?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Sets one top-level key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let dur = |v: &str| parse_duration(v).ok_or_else(|| format!("bad duration {v:?}"));
        let boolean = |v: &str| parse_bool(v).ok_or_else(|| format!("bad boolean {v:?}"));
        let port = |v: &str| v.parse::<u16>().map_err(|_| format!("bad port {v:?}"));
        match key {
            "bind_address" => self.bind_address = value.parse().map_err(|_| format!("bad address {value:?}"))?,
            "auth_port" => self.auth_port = port(value)?,
            "acct_port" => self.acct_port = port(value)?,
            "feature_enabled" => self.store.feature_enabled = boolean(value)?,
            "reject_unknown_signals" => self.reject_unknown_signals = boolean(value)?,
            "retention" => self.store.retention = dur(value)?,
            "ephemeral_retention" => self.store.ephemeral_retention = dur(value)?,
            "max_macs_per_pdid" => {
                self.store.max_macs_per_pdid = value.parse().map_err(|_| format!("bad count {value:?}"))?
            }
            "anchor_priority" => {
                self.store.anchor_priority = value
                    .split(',')
                    .map(|k| k.parse::<AnchorKind>())
                    .collect::<Result<_, _>>()?
            }
            "guard_timeout" => {
                let d = dur(value)?;
                self.correlator.guard_timeout = d;
                self.correlator.guard_wait = d;
            }
            "username_sufficient" => self.correlator.username_sufficient = boolean(value)?,
            "context_window" => self.context_window = dur(value)?,
            "worker_threads" => {
                self.worker_threads = value
                    .parse()
                    .ok()
                    .filter(|n| *n > 0)
                    .ok_or_else(|| format!("bad thread count {value:?}"))?
            }
            "store" => self.store_path = Some(PathBuf::from(value)),
            "audit_log" => self.audit_log = Some(PathBuf::from(value)),
            "oui_registry" => self.oui_registry = Some(PathBuf::from(value)),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Applies `PDID_AUTH_PORT`, `PDID_ACCT_PORT` and `PDID_FEATURE_ENABLED`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigFileError> {
        for (var, key) in [
            ("PDID_AUTH_PORT", "auth_port"),
            ("PDID_ACCT_PORT", "acct_port"),
            ("PDID_FEATURE_ENABLED", "feature_enabled"),
        ] {
            if let Some(v) = get(var) {
                self.set(key, v.trim())
                    .map_err(|e| ConfigFileError::Invalid(format!("{var}: {e}")))?;
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigFileError> {
        if self.auth_port == self.acct_port && self.auth_port != 0 {
            return Err(ConfigFileError::Invalid(format!(
                "auth_port and acct_port are both {}",
                self.auth_port
            )));
        }
        self.store
            .validate()
            .map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for n in &self.nas_clients {
            if !seen.insert(n.address) {
                return Err(ConfigFileError::Invalid(format!("duplicate nas address {}", n.address)));
            }
        }
        Ok(())
    }

    /// Effective configuration with secrets withheld, as `key = value` text.
    pub fn render(&self) -> String {
        let v = self.view();
        let mut out = String::new();
        let _ = writeln!(out, "bind_address = {}", v.bind_address);
        let _ = writeln!(out, "auth_port = {}", v.auth_port);
        let _ = writeln!(out, "acct_port = {}", v.acct_port);
        let _ = writeln!(out, "feature_enabled = {}", v.feature_enabled);
        let _ = writeln!(out, "reject_unknown_signals = {}", v.reject_unknown_signals);
        let _ = writeln!(out, "retention = {}", v.retention);
        let _ = writeln!(out, "ephemeral_retention = {}", v.ephemeral_retention);
        let _ = writeln!(out, "max_macs_per_pdid = {}", v.max_macs_per_pdid);
        let _ = writeln!(out, "anchor_priority = {}", v.anchor_priority.join(","));
        let _ = writeln!(out, "guard_timeout = {}", v.guard_timeout);
        let _ = writeln!(out, "username_sufficient = {}", v.username_sufficient);
        let _ = writeln!(out, "context_window = {}", v.context_window);
        let _ = writeln!(out, "worker_threads = {}", v.worker_threads);
        for (k, p) in [("store", &v.store), ("audit_log", &v.audit_log), ("oui_registry", &v.oui_registry)] {
            if let Some(p) = p {
                let _ = writeln!(out, "{k} = {p}");
            }
        }
        for n in &v.nas {
            let _ = writeln!(out, "\n[nas \"{}\"]\naddress = {}\nsecret = <redacted>", n.name, n.address);
        }
        out
    }

    pub fn view(&self) -> ConfigView {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        ConfigView {
            bind_address: self.bind_address.to_string(),
            auth_port: self.auth_port,
            acct_port: self.acct_port,
            feature_enabled: self.store.feature_enabled,
            reject_unknown_signals: self.reject_unknown_signals,
            retention: format_duration(self.store.retention),
            ephemeral_retention: format_duration(self.store.ephemeral_retention),
            max_macs_per_pdid: self.store.max_macs_per_pdid,
            anchor_priority: self.store.anchor_priority.iter().map(|k| k.as_str().to_string()).collect(),
            guard_timeout: format_duration(self.correlator.guard_timeout),
            username_sufficient: self.correlator.username_sufficient,
            context_window: format_duration(self.context_window),
            worker_threads: self.worker_threads,
            store: path(&self.store_path),
            audit_log: path(&self.audit_log),
            oui_registry: path(&self.oui_registry),
            nas: self
                .nas_clients
                .iter()
                .map(|n| NasView {
                    name: n.name.clone(),
                    address: n.address.to_string(),
                })
                .collect(),
        }
    }
}

/// Serializable, secret-free view of a [`ServerConfig`].
#[derive(Debug, Clone, Serialize)]
pub struct ConfigView {
    pub bind_address: String,
    pub auth_port: u16,
    pub acct_port: u16,
    pub feature_enabled: bool,
    pub reject_unknown_signals: bool,
    pub retention: String,
    pub ephemeral_retention: String,
    pub max_macs_per_pdid: usize,
    pub anchor_priority: Vec<String>,
    pub guard_timeout: String,
    pub username_sufficient: bool,
    pub context_window: String,
    pub worker_threads: usize,
    pub store: Option<String>,
    pub audit_log: Option<String>,
    pub oui_registry: Option<String>,
    pub nas: Vec<NasView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NasView {
    pub name: String,
    pub address: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
# test deployment
auth_port = 11812
acct_port = 11813
feature_enabled = false
retention = 30d
anchor_priority = cert, mdm, agent, username, fingerprint

[nas "switch-1"]
address = 192.0.2.10
secret = "s3cret"

[nas "vpn-gw"]
address = 192.0.2.20
secret = other
"#;

    #[test]
    fn parses_sample() {
        let c = ServerConfig::parse(SAMPLE).unwrap();
        assert_eq!((c.auth_port, c.acct_port), (11812, 11813));
        assert!(!c.store.feature_enabled);
        assert_eq!(c.store.retention, Duration::from_secs(30 * 86_400));
        assert_eq!(c.nas_clients.len(), 2);
        assert_eq!(c.nas_clients[0].secret.expose(), b"s3cret");
        assert_eq!(c.nas_clients[1].name, "vpn-gw");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ServerConfig::parse("auth_port = 1812\nretention = forever\n").unwrap_err();
        assert!(matches!(err, ConfigFileError::Syntax { line: 2, .. }), "{err}");
        let err = ServerConfig::parse("\n\nnonsense\n").unwrap_err();
        assert!(matches!(err, ConfigFileError::Syntax { line: 3, .. }));
        let err = ServerConfig::parse("[nas \"x\"]\naddress = 10.0.0.1\n").unwrap_err();
        assert!(matches!(err, ConfigFileError::Syntax { line: 1, .. }));
    }

    #[test]
    fn ports_must_differ() {
        assert!(ServerConfig::parse("auth_port = 1812\nacct_port = 1812\n").is_err());
    }

    #[test]
    fn duplicate_anchor_rejected() {
        assert!(ServerConfig::parse("anchor_priority = cert, cert\n").is_err());
    }

    #[test]
    fn environment_overrides() {
        let mut c = ServerConfig::parse(SAMPLE).unwrap();
        c.apply_env(|k| match k {
            "PDID_AUTH_PORT" => Some("2812".into()),
            "PDID_FEATURE_ENABLED" => Some("true".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.auth_port, 2812);
        assert!(c.store.feature_enabled);
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("120s"), Some(Duration::from_secs(120)));
        assert_eq!(parse_duration("24h"), Some(Duration::from_secs(86_400)));
        assert_eq!(parse_duration("90"), Some(Duration::from_secs(90)));
        assert_eq!(parse_duration("3w"), None);
        assert_eq!(format_duration(Duration::from_secs(180 * 86_400)), "180d");
    }

    #[test]
    fn render_hides_secrets() {
        let text = ServerConfig::parse(SAMPLE).unwrap().render();
        assert!(!text.contains("s3cret"));
        assert!(text.contains("[nas \"switch-1\"]"));
        let again = ServerConfig::parse(&text.replace("<redacted>", "x")).unwrap();
        assert_eq!(again.auth_port, 11812);
    }
}
