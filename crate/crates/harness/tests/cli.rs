use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wksp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wksp")).args(args).output().expect("spawn wksp")
}

fn scenario_path(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
        .display()
        .to_string()
}

fn write_json(dir: &Path, file: &str, v: &Value) -> String {
    let p = dir.join(file);
    std::fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p.display().to_string()
}

#[test]
fn two_peer_scenario_passes_with_one_link_delay() {
    let out = wksp(&["run", &scenario_path("two_peer")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["converged"], true);
    assert_eq!(report["latency_samples_ms"], json!([50]));
    assert!(String::from_utf8_lossy(&out.stderr).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn lone_peer_is_trivially_converged() {
    let dir = tempfile::tempdir().unwrap();
    let s = json!({
        "name": "solo",
        "seed": 1,
        "workspace": { "name": "/yourworkspaces.app/MeetRoom" },
        "peers": [ { "username": "alice" } ],
        "links": { "delay_ms": 10, "loss": 0.0 },
        "script": [
            { "t": 100, "peer": "alice", "op": "create_text", "path": "a.txt" },
            { "t": 100, "peer": "alice", "op": "flush" }
        ],
        "assertions": [ { "check": "converged" }, { "check": "no_violations" } ]
    });
    let out = wksp(&["run", &write_json(dir.path(), "solo.json", &s)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_peer_in_script_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut s: Value = serde_json::from_str(&std::fs::read_to_string(scenario_path("two_peer")).unwrap()).unwrap();
    s["script"][0]["peer"] = json!("mallory");
    let out = wksp(&["run", &write_json(dir.path(), "bad.json", &s)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn schema_check_allows_own_key_and_denies_foreign_key() {
    let dir = tempfile::tempdir().unwrap();
    let rules = write_json(
        dir.path(),
        "rules.json",
        &json!({
            "workspace": "/yourworkspaces.app/MeetRoom",
            "root_cert": "/yourworkspaces.app/MeetRoom/KEY/01/self/v=1",
            "initiator": "alice"
        }),
    );
    let data = "/yourworkspaces.app/MeetRoom/alice/DATA/3";
    let own = "/yourworkspaces.app/MeetRoom/alice/KEY/aa/NA/v=1";
    let foreign = "/yourworkspaces.app/MeetRoom/bob/KEY/bb/NA/v=1";
    let ok = wksp(&["schema-check", &rules, data, own]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("rule 4"));
    let denied = wksp(&["schema-check", &rules, data, foreign]);
    assert_eq!(denied.status.code(), Some(1));
}

#[test]
fn verify_store_flags_a_tampered_packet() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let store_s = store.display().to_string();
    let out = wksp(&["run", &scenario_path("two_peer"), "--store", &store_s]);
    assert!(out.status.success());
    let clean = wksp(&["verify-store", &store_s]);
    assert!(clean.status.success(), "{}", String::from_utf8_lossy(&clean.stdout));

    let bob = store.join("bob");
    let victim = std::fs::read_dir(&bob)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "workspace.json")
        .max_by_key(|p| std::fs::metadata(p).unwrap().len())
        .expect("bob stored packets");
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&victim, bytes).unwrap();

    let tampered = wksp(&["verify-store", &store_s]);
    assert_eq!(tampered.status.code(), Some(1));
    let text = String::from_utf8_lossy(&tampered.stdout);
    assert!(text.lines().any(|l| l.starts_with("BAD ")), "{text}");
}

#[test]
fn keygen_is_reproducible_from_a_seed() {
    let seed = "07".repeat(32);
    let a = wksp(&["keygen", "--seed", &seed]);
    let b = wksp(&["keygen", "--seed", &seed]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let k: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(k["public"].as_str().unwrap().len(), 64);
    assert_eq!(wksp(&["keygen", "--seed", "zz"]).status.code(), Some(2));
}
