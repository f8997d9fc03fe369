//! End-to-end runs of the `horcrux` binary: output shape and exit codes.

use std::fs;
use std::process::{Command, Output};

fn horcrux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horcrux")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn last_line(o: &Output) -> serde_json::Value {
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    serde_json::from_str(text.lines().last().expect("some output")).unwrap()
}

#[test]
fn auth_modes_and_adversaries() {
    let o = horcrux(&["auth", "--mode", "remote"]);
    assert_eq!(code(&o), 0);
    assert_eq!(last_line(&o)["summary"]["outcome"]["accepted"], true);

    let o = horcrux(&["auth", "--mode", "local", "--mitigation"]);
    assert_eq!(code(&o), 0);

    let o = horcrux(&["auth", "--mode", "remote", "--impostor"]);
    assert_eq!(code(&o), 2);
    assert_eq!(last_line(&o)["summary"]["outcome"]["failure_reason"], "BiometricMismatch");

    for (adversary, reason) in [("replay", "Replay"), ("tamper-hub", "TamperDetected")] {
        let o = horcrux(&["auth", "--mode", "local", "--adversary", adversary]);
        assert_eq!(code(&o), 3, "{adversary}");
        assert_eq!(last_line(&o)["summary"]["outcome"]["failure_reason"], reason);
    }

    let o = horcrux(&["auth", "--mode", "remote", "--adversary", "mitm-observe"]);
    assert_eq!(code(&o), 0);
    assert_eq!(last_line(&o)["summary"]["leaks"], 0);
}

#[test]
fn transcript_lines_are_canonical_events() {
    let o = horcrux(&["auth", "--mode", "local"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() > 2);
    let mut last_tick = 0;
    for line in &lines[..lines.len() - 1] {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(&serde_json::to_string(&v).unwrap(), line, "sorted keys, no whitespace");
        let tick = v["tick"].as_u64().unwrap();
        assert!(tick >= last_tick);
        last_tick = tick;
    }
    let again = horcrux(&["auth", "--mode", "local"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text, "same seed, same bytes");
}

#[test]
fn share_spoof_attack() {
    let o = horcrux(&["attack", "--kind", "share-spoof"]);
    assert_eq!(code(&o), 0, "unmitigated spoof is accepted");
    assert_eq!(last_line(&o)["summary"]["outcome"]["mode"], "Local");
    let o = horcrux(&["attack", "--kind", "share-spoof", "--mitigation"]);
    assert_eq!(code(&o), 3);
    assert_eq!(last_line(&o)["summary"]["outcome"]["failure_reason"], "SpoofDetected");
}

#[test]
fn rates_output() {
    let o = horcrux(&["rates", "--trials", "25"]);
    assert_eq!(code(&o), 0);
    let v = last_line(&o);
    assert_eq!((v["frr"].as_f64(), v["far"].as_f64(), v["trials"].as_u64()), (Some(0.0), Some(0.0), Some(25)));
    assert_eq!(code(&horcrux(&["rates", "--trials", "0"])), 4);
}

#[test]
fn enroll_persists_and_ledger_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(&cfg, format!("seed = 5\nscheme = shamir\nk = 2\nn = 3\nreplicas = 2\nstate_dir = {}\n", dir.path().display()))
        .unwrap();
    let transcript = dir.path().join("enroll.log");
    let o = horcrux(&["enroll", "--config", cfg.to_str().unwrap(), "--transcript", transcript.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(last_line(&o)["summary"]["did"].as_str().unwrap().starts_with("did:horcrux:"));
    assert!(fs::read_to_string(&transcript).unwrap().lines().count() > 1);
    for hub in ["hub-1", "hub-2"] {
        assert_eq!(fs::read_dir(dir.path().join(hub)).unwrap().count(), 1, "{hub}");
    }

    let ledger = dir.path().join("ledger.json");
    let o = horcrux(&["verify-ledger", ledger.to_str().unwrap()]);
    assert_eq!((code(&o), String::from_utf8(o.stdout).unwrap().trim()), (0, "valid"));

    let mut bytes = fs::read(&ledger).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x04;
    fs::write(&ledger, &bytes).unwrap();
    let o = horcrux(&["verify-ledger", ledger.to_str().unwrap()]);
    assert_eq!((code(&o), String::from_utf8(o.stdout).unwrap().trim()), (3, "invalid"));

    let empty = dir.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&horcrux(&["verify-ledger", empty.to_str().unwrap()])), 0);
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "threshold = 2\n").unwrap();
    assert_eq!(code(&horcrux(&["enroll", "--config", bad.to_str().unwrap()])), 4);
    assert_eq!(code(&horcrux(&["enroll", "--config", "/definitely/missing.cfg"])), 4);
    assert_eq!(code(&horcrux(&["auth", "--mode", "sideways"])), 4);
    assert_eq!(code(&horcrux(&["auth", "--mode", "local", "--adversary", "gremlin"])), 4);
    assert_eq!(code(&horcrux(&["attack", "--kind", "none"])), 4);
    assert_eq!(code(&horcrux(&["verify-ledger", "/definitely/missing.json"])), 4);
    assert_eq!(code(&horcrux(&["frobnicate"])), 4);
    assert_eq!(code(&horcrux(&["--help"])), 0);
}
