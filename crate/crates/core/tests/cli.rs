//! The `pdid` binary end to end: exit codes, serve/shutdown, store commands.

use std::io::{BufRead, BufReader};
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use pdid::radius::{
    attr, decode_packet, encode_packet, encode_vsa, find_pdids, verify_response, Attribute, Code, RadiusPacket,
    SharedSecret, VendorType,
};

const SECRET: &str = "cli-test-secret";

fn pdid() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pdid"));
    c.env_remove("PDID_AUTH_PORT")
        .env_remove("PDID_ACCT_PORT")
        .env_remove("PDID_FEATURE_ENABLED")
        .env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    pdid().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn free_port() -> u16 {
    UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn write_config(dir: &Path, auth: u16, acct: u16) -> PathBuf {
    let path = dir.join("server.conf");
    let text = format!(
        "bind_address = 127.0.0.1\nauth_port = {auth}\nacct_port = {acct}\nstore = {}\n\n[nas \"lab\"]\naddress = 127.0.0.1\nsecret = \"{SECRET}\"\n",
        dir.join("store.snap").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// Starts `serve` and waits for its listening line.
fn start_server(config: &Path) -> Child {
    let mut child = pdid()
        .args(["--config", config.to_str().unwrap(), "serve"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let err = child.stderr.take().unwrap();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in BufReader::new(err).lines().map_while(Result::ok) {
            if line.contains("listening on") {
                let _ = tx.send(());
            }
        }
    });
    rx.recv_timeout(Duration::from_secs(20)).expect("server came up");
    child
}

fn authenticate(port: u16, cert: &str) -> pdid::identity::Pdid {
    let secret = SharedSecret::new(SECRET).unwrap();
    let request = RadiusPacket::new(Code::AccessRequest, 3, *b"0123456789abcdef")
        .with_attribute(Attribute::text(attr::CALLING_STATION_ID, "02:00:00:00:00:77"))
        .with_attribute(encode_vsa(VendorType::CertificateIdentity, cert.as_bytes()).unwrap());
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    sock.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    sock.send_to(&encode_packet(&request).unwrap(), ("127.0.0.1", port)).unwrap();
    let mut buf = [0u8; 4096];
    let (n, _) = sock.recv_from(&mut buf).unwrap();
    let reply = decode_packet(&buf[..n]).unwrap();
    assert_eq!(reply.code, Code::AccessAccept);
    assert!(verify_response(&reply, &request.authenticator, &secret));
    find_pdids(&reply.attributes)[0]
}

fn interrupt(child: &Child) {
    let rc = unsafe { libc::kill(child.id() as libc::pid_t, libc::SIGINT) };
    assert_eq!(rc, 0);
}

#[test]
fn serve_answers_and_saves_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let (auth, acct) = (free_port(), free_port());
    let config = write_config(dir.path(), auth, acct);
    let store = dir.path().join("store.snap");

    let mut child = start_server(&config);
    assert!(dir.path().join("store.snap.lock").exists());
    let pdid = authenticate(auth, "CN=cli-laptop");
    interrupt(&child);
    let status = child.wait().unwrap();
    assert!(status.success(), "{status:?}");
    assert!(store.exists());
    assert!(!dir.path().join("store.snap.lock").exists());

    let s = store.to_str().unwrap();
    let listed = run(&["--store", s, "store-list"]);
    assert_eq!(listed.status.code(), Some(0));
    assert!(stdout(&listed).contains(&pdid.to_string()), "{}", stdout(&listed));

    let license = run(&["--store", s, "report", "license"]);
    assert_eq!(stdout(&license), "persistent: 1, ephemeral: 0\n");

    let audit = run(&["--store", s, "--format", "json", "report", "audit", &pdid.to_string()]);
    assert_eq!(audit.status.code(), Some(0));
    let events: serde_json::Value = serde_json::from_slice(&audit.stdout).unwrap();
    let ops: Vec<&str> = events.as_array().unwrap().iter().map(|e| e["op"].as_str().unwrap()).collect();
    assert_eq!(ops, ["created", "mac_associated", "authenticated"]);

    // Restarted on the saved snapshot, the same certificate keeps its identifier.
    let mut child = start_server(&config);
    assert_eq!(authenticate(auth, "CN=cli-laptop"), pdid);
    interrupt(&child);
    assert!(child.wait().unwrap().success());
}

#[test]
fn port_in_use_is_environment_error() {
    let dir = tempfile::tempdir().unwrap();
    let taken = UdpSocket::bind("127.0.0.1:0").unwrap();
    let config = write_config(dir.path(), taken.local_addr().unwrap().port(), free_port());
    let out = run(&["--config", config.to_str().unwrap(), "serve"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("cannot bind"), "{}", stderr(&out));
    assert!(!dir.path().join("store.snap.lock").exists());
}

#[test]
fn malformed_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "auth_port = 1812\n# fine\nretention = forever\n").unwrap();
    let out = run(&["--config", path.to_str().unwrap(), "config-show"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn config_show_hides_secrets() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 11812, 11813);
    let out = run(&["--config", config.to_str().unwrap(), "config-show"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("auth_port = 11812"));
    assert!(!stdout(&out).contains(SECRET));
}

#[test]
fn environment_overrides_ports() {
    let out = pdid().env("PDID_AUTH_PORT", "2812").args(["config-show"]).output().unwrap();
    assert!(stdout(&out).contains("auth_port = 2812"), "{}", stdout(&out));
    let out = pdid().env("PDID_AUTH_PORT", "many").args(["config-show"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_exit_codes() {
    let ok = run(&["simulate", &scenario("hotspot_10x3.json")]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("result: pass"));

    let dir = tempfile::tempdir().unwrap();
    let undefined = dir.path().join("undefined.json");
    std::fs::write(
        &undefined,
        r#"{"name": "u", "seed": 1, "devices": [{"id": "a", "use_case": "byod_cert"}],
            "schedule": [{"at": 0, "event": "connect", "devices": ["ghost"]}]}"#,
    )
    .unwrap();
    let out = run(&["simulate", undefined.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ghost"), "{}", stderr(&out));

    let unmet = dir.path().join("unmet.json");
    std::fs::write(
        &unmet,
        r#"{"name": "unmet", "seed": 1, "devices": [{"id": "a", "use_case": "byod_cert"}],
            "schedule": [{"at": 0, "event": "connect", "devices": ["a"]}],
            "expect": {"persistent_pdids": 2}}"#,
    )
    .unwrap();
    let out = run(&["simulate", unmet.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAILED"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"name\": \"b\",\n  \"seed\": }").unwrap();
    assert_eq!(run(&["simulate", broken.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "/nonexistent/x.json"]).status.code(), Some(2));
}

#[test]
fn simulate_seed_override_changes_identifiers_not_counts() {
    let a = run(&["--format", "json", "simulate", &scenario("byod_100x10.json")]);
    let b = run(&["--format", "json", "--seed", "99", "simulate", &scenario("byod_100x10.json")]);
    let (a, b): (serde_json::Value, serde_json::Value) =
        (serde_json::from_slice(&a.stdout).unwrap(), serde_json::from_slice(&b.stdout).unwrap());
    assert_eq!(b["seed"], 99);
    assert_eq!(a["metrics"]["persistent_pdids"], b["metrics"]["persistent_pdids"]);
}

/// A saved store holding one persistent record and one long-idle hotspot record.
fn seeded_store(dir: &Path) -> (PathBuf, pdid::identity::Pdid) {
    use pdid::correlator::{Correlator, CorrelatorConfig, IdentitySignalSet, UseCaseHint};
    use pdid::identity::{IdentityStore, StoreConfig};
    use pdid::time::Timestamp;
    use std::sync::Arc;

    let store = Arc::new(IdentityStore::new(StoreConfig::default()).unwrap());
    let c = Correlator::with_seed(Arc::clone(&store), CorrelatorConfig::default(), 1);
    let now = Timestamp::now().secs();
    let kept = c
        .correlate(
            &IdentitySignalSet {
                cert_id: Some("CN=kept".into()),
                ..Default::default()
            },
            Timestamp(now),
        )
        .unwrap()
        .pdid;
    c.correlate(
        &IdentitySignalSet {
            mac: Some("02:00:00:00:00:99".parse().unwrap()),
            use_case_hint: Some(UseCaseHint::GuestHotspot),
            ..Default::default()
        },
        Timestamp(now - 7 * 86_400),
    )
    .unwrap();
    let path = dir.join("store.snap");
    store.save_snapshot(&path).unwrap();
    (path, kept)
}

#[test]
fn store_commands() {
    let dir = tempfile::tempdir().unwrap();
    let (path, kept) = seeded_store(dir.path());
    let s = path.to_str().unwrap();

    let out = run(&["--store", s, "report", "license"]);
    assert_eq!(stdout(&out), "persistent: 1, ephemeral: 1\n");

    let out = run(&["--store", s, "store-prune"]);
    assert_eq!((out.status.code(), stdout(&out)), (Some(0), "pruned 1\n".to_string()));
    let out = run(&["--store", s, "--format", "json", "store-prune"]);
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()["pruned"], 0);

    let unknown = "00000000-0000-4000-8000-000000000000";
    let out = run(&["--store", s, "report", "audit", unknown]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert_eq!(run(&["--store", s, "store-delete", unknown]).status.code(), Some(1));
    assert_eq!(run(&["--store", s, "store-delete", "not-a-pdid"]).status.code(), Some(2));

    let out = run(&["--store", s, "store-delete", &kept.to_string()]);
    assert_eq!((out.status.code(), stdout(&out)), (Some(0), "deleted 1\n".to_string()));
    let out = run(&["--store", s, "report", "license"]);
    assert_eq!(stdout(&out), "persistent: 0, ephemeral: 0\n");

    let audit = std::fs::read_to_string(dir.path().join("store.snap.audit.jsonl")).unwrap();
    assert!(audit.contains("\"pruned\"") && audit.contains("\"deleted\""), "{audit}");
}

#[test]
fn held_lock_is_environment_error() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = seeded_store(dir.path());
    std::fs::write(dir.path().join("store.snap.lock"), "1\n").unwrap();
    let out = run(&["--store", path.to_str().unwrap(), "store-prune"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("in use"), "{}", stderr(&out));
}

#[test]
fn usage_errors() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["report", "audit", "--store", "/nonexistent"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
