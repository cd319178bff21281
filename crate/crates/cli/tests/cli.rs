// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn mgsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgsim"))
        .args(args)
        .env_remove("MGSIM_SEED")
        .output()
        .expect("mgsim runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SCENARIO: &str = r#"{
  "version": 1,
  "seed": 11,
  "devices": [{ "id": "gen", "clock": "X540" }, { "id": "sink", "clock": "X540", "capture": true }],
  "links": [{ "a": "gen", "b": "sink", "length_m": 2.0, "vp_fraction": 0.72, "k_ns": 310.7 }],
  "tasks": [
    { "kind": "generator", "id": "load", "device": "gen", "pattern": { "poisson": { "rate_pps": 1e6 } },
      "rate_control": "gapfill", "packets": 500 },
    { "kind": "counter", "id": "rx", "device": "sink", "histogram": { "bin_width_ns": 64.0 } }
  ]
}"#;

fn write_scenario(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn linerate_and_gapcheck() {
    let o = mgsim(&["linerate", "--frame", "64", "--rate", "10e9"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "14880952 pps (14880952.38)\n");

    let o = mgsim(&["gapcheck", "--gap-ns", "30", "--rate", "10e9"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "Approximated (37.5 bytes, below 76-byte filler minimum)\n"
    );

    let o = mgsim(&["gapcheck", "--gap-ns", "-1", "--rate", "10e9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate() {
    let o = mgsim(&["estimate", "random-udp-example"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "229.2±3.9 cycles/pkt\n10.47 Mpps at 2.4 GHz (±0.18)\n"
    );

    let o = mgsim(&["estimate", "no-such-op"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("known:"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mgsim(&[]).status.code(), Some(2));
    assert_eq!(mgsim(&["linerate", "--frame", "64"]).status.code(), Some(2));
    assert_eq!(
        mgsim(&["linerate", "--frame", "64", "--rate", "fast"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(mgsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), SCENARIO);
    let out = dir.path().join("out");
    let o = mgsim(&["run", &scenario, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("seed 11"));
    for name in ["report.json", "rx.csv", "rx.hist.csv", "sink.pcap"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 11);
    assert_eq!(report["tasks"][1]["packets"], 500);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), SCENARIO);
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let out = dir.path().join("out");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_mgsim"));
        cmd.args(["run", &scenario, "--out", out.to_str().unwrap()])
            .args(extra);
        match env {
            Some(v) => cmd.env("MGSIM_SEED", v),
            None => cmd.env_remove("MGSIM_SEED"),
        };
        let o = cmd.output().unwrap();
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap())
                .unwrap();
        report["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None), 11);
    assert_eq!(seed_of(&[], Some("22")), 22);
    assert_eq!(seed_of(&["--seed", "33"], Some("22")), 33);
}

#[test]
fn single_worker_matches() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), SCENARIO);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        mgsim(&["run", &scenario, "--out", a.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let o = mgsim(&[
        "run",
        &scenario,
        "--out",
        b.to_str().unwrap(),
        "--single-worker",
    ]);
    assert_eq!(o.status.code(), Some(0));
    for name in ["report.json", "rx.csv", "rx.hist.csv", "sink.pcap"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn run_errors() {
    let dir = tempfile::tempdir().unwrap();

    // missing file and malformed scenario are configuration errors
    assert_eq!(
        mgsim(&["run", "/nonexistent/scenario.json"]).status.code(),
        Some(2)
    );
    let bad = write_scenario(
        dir.path(),
        &SCENARIO.replace("\"packets\": 500", "\"packets\": \"many\""),
    );
    let o = mgsim(&["run", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tasks[0]"));

    // an output path that cannot become a directory fails at run time
    let scenario = write_scenario(dir.path(), SCENARIO);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = mgsim(&["run", &scenario, "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
