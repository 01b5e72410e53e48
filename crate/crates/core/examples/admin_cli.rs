//! Drive the admin commands in-process against a throwaway store.

use std::io::Write;

fn pdid_cmd(args: &[&str]) -> i32 {
    let mut out = Vec::new();
    let code = pdid::admin::run(std::iter::once("pdid").chain(args.iter().copied()), &mut out);
    std::io::stdout().write_all(&out).unwrap();
    code
}

fn main() {
    let dir = std::env::temp_dir().join(format!("pdid-admin-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let store = dir.join("store.snap");
    let store = store.to_str().unwrap();
    let scenario = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/anchored_rotation.json");

    println!("$ pdid config-show");
    pdid_cmd(&["config-show"]);
    println!("$ pdid --store {store} store-list   (nothing saved yet)");
    let code = pdid_cmd(&["--store", store, "store-list"]);
    println!("exit {code}");
    println!("$ pdid simulate {scenario} --format json | head");
    let mut out = Vec::new();
    pdid::admin::run(["pdid", "--format", "json", "simulate", scenario], &mut out);
    for line in String::from_utf8_lossy(&out).lines().take(8) {
        println!("{line}");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
