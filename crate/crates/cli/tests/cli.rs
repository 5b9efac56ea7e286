use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use cellx_core::knowledge::Index;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cellx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellx")).args(args).current_dir(root()).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_exit_codes() {
    let ok = cellx(&["validate", "fixtures/band3-valid.toml"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert_eq!(stdout(&ok).lines().next(), Some("valid"));

    let bad = cellx(&["validate", "fixtures/pci-504.toml"]);
    assert_eq!(code(&bad), 1);
    assert!(stdout(&bad).starts_with("invalid"));
    assert!(stdout(&bad).contains("pci"));

    let json = cellx(&["validate", "--json", "fixtures/pci-504.toml"]);
    assert_eq!(code(&json), 1);
    let v: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["valid"], false);
    assert_eq!(v["issues"][0]["field"], "pci");

    let dir = tempfile::tempdir().unwrap();
    let as_json = write(
        dir.path(),
        "c.json",
        r#"{"band":3,"earfcn_dl":1575,"bandwidth_mhz":10.0,"pci":301,"tx_power_dbm":30.0,"plmn":"00101","tac":7,"cell_identity":6699}"#,
    );
    assert_eq!(code(&cellx(&["validate", &as_json])), 0);
    let garbage = write(dir.path(), "g.toml", "band = [");
    assert_eq!(code(&cellx(&["validate", &garbage])), 2);
    let unknown_field = write(dir.path(), "u.toml", "band = 3\ncolour = \"blue\"\n");
    assert_eq!(code(&cellx(&["validate", &unknown_field])), 2);
    assert_eq!(code(&cellx(&["validate", "fixtures/missing.toml"])), 2);
    assert_eq!(code(&cellx(&["validate"])), 2);
}

#[test]
fn scenario_exit_codes() {
    for name in ["configure-band3", "diagnose-sync-loss", "rollback-on-regression"] {
        let o = cellx(&["scenario", &format!("scenarios/{name}.toml")]);
        assert_eq!(code(&o), 0, "{name}\n{}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).lines().any(|l| l.ends_with("expectations passed")));
        assert!(!stdout(&o).contains("FAIL"));
    }

    let json = cellx(&["scenario", "--json", "scenarios/configure-band3.toml"]);
    assert_eq!(code(&json), 0);
    let v: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 9);

    let dir = tempfile::tempdir().unwrap();
    let failing = write(
        dir.path(),
        "f.toml",
        "name = \"f\"\nstation_seed = 1\n[provider]\nkind = \"scripted\"\n[[steps]]\nexpect = { lifecycle = \"RUNNING\" }\n",
    );
    let o = cellx(&["scenario", &failing]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));

    let no_expects = write(
        dir.path(),
        "n.toml",
        "name = \"n\"\nstation_seed = 1\n[provider]\nkind = \"scripted\"\n[[steps]]\nsay = \"hi\"\n",
    );
    let o = cellx(&["scenario", &no_expects]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no expectations"));

    let live = write(
        dir.path(),
        "l.toml",
        "name = \"l\"\nstation_seed = 1\n[provider]\nkind = \"live\"\n[[steps]]\nexpect = { lifecycle = \"STOPPED\" }\n",
    );
    assert_eq!(code(&cellx(&["scenario", &live])), 2);
    assert_eq!(code(&cellx(&["scenario", "scenarios/nope.toml"])), 2);
    assert_eq!(code(&cellx(&["scenario", "--frobnicate", "scenarios/configure-band3.toml"])), 2);
}

#[test]
fn auto_flag_disables_gate_with_warning() {
    // The shipped scenario expects a pending approval, so with the gate off
    // its expectations fail; the warning must still be printed.
    let o = cellx(&["scenario", "--auto", "scenarios/configure-band3.toml"]);
    assert!(stderr(&o).contains("warning: --auto"));
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL  step  2  approval"));
}

fn strip_volatile(line: &str) -> Value {
    let mut v: Value = serde_json::from_str(line).unwrap();
    v.as_object_mut().unwrap().remove("ts");
    if let Some(r) = v["payload"].as_object_mut() {
        r.remove("latency_ms");
    }
    v
}

#[test]
fn scenario_replay_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["configure-band3", "diagnose-sync-loss", "rollback-on-regression"] {
        let path = format!("scenarios/{name}.toml");
        let runs: Vec<(String, Vec<Value>)> = (0..2)
            .map(|i| {
                let audit = dir.path().join(format!("{name}-{i}.jsonl"));
                let o = cellx(&["scenario", &path, "--audit", audit.to_str().unwrap()]);
                assert_eq!(code(&o), 0);
                let records = std::fs::read_to_string(&audit).unwrap().lines().map(strip_volatile).collect();
                (stdout(&o), records)
            })
            .collect();
        assert_eq!(runs[0].0, runs[1].0, "{name} table");
        assert!(!runs[0].1.is_empty());
        assert_eq!(runs[0].1, runs[1].1, "{name} audit");
    }
}

#[test]
fn seed_override_changes_the_run() {
    let base = cellx(&["scenario", "--json", "scenarios/configure-band3.toml"]);
    let other = cellx(&["scenario", "--json", "--seed", "99", "scenarios/configure-band3.toml"]);
    let kpis = |o: &Output| {
        let v: Value = serde_json::from_str(&stdout(o)).unwrap();
        v["turns"][0]["iterations"][4]["result"]["ok"]["samples"].clone()
    };
    assert_ne!(kpis(&base), kpis(&other));
}

#[test]
fn ingest_writes_a_loadable_index() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("radio")).unwrap();
    write(dir.path(), "radio/pa.md", "# PA\n\nPower amplifier overheating reduces output.\n\n## Cooling\n\nCheck fans.\n");
    write(dir.path(), "backhaul.txt", "Backhaul link down: check the S1 interface.");
    let out = dir.path().join("idx.json");
    let o = cellx(&["ingest", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("radio/pa.md"));
    assert!(stdout(&o).contains("2 documents"));
    let index = Index::load(&out).unwrap();
    assert!(index.retrieve("amplifier", 1)[0].chunk_id.starts_with("radio/pa.md#"));

    let j = cellx(&["ingest", "--json", dir.path().to_str().unwrap()]);
    assert_eq!(code(&j), 0);
    let v: Value = serde_json::from_str(&stdout(&j)).unwrap();
    assert_eq!(v["documents"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("cellx-index.json").exists());

    assert_eq!(code(&cellx(&["ingest", "fixtures/band3-valid.toml"])), 2);
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(config: &str, extra: &[&str]) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cellx"))
        .args(["serve", "--config", config])
        .args(extra)
        .current_dir(root())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
    Server(child, url)
}

fn service_config(dir: &Path) -> String {
    let scenario = root().join("scenarios/configure-band3.toml");
    let text = format!(
        "listen = \"127.0.0.1:0\"\nstation_seed = 7\ntick_interval_s = 0\n[provider]\nkind = \"scripted\"\nscenario = {:?}\n",
        scenario.to_str().unwrap()
    );
    write(dir, "service.toml", &text)
}

#[test]
fn serve_and_chat_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = service_config(dir.path());
    let server = serve(&cfg, &[]);

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let station: Value = agent.get(&format!("{}/station", server.1)).call().unwrap().body_mut().read_json().unwrap();
    assert_eq!(station["lifecycle"], "STOPPED");

    let mut chat = Command::new(env!("CARGO_BIN_EXE_cellx"))
        .args(["chat", "--endpoint", &server.1])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    chat.stdin.take().unwrap().write_all(b"Bring up band 3 at 10 MHz\ny\n").unwrap();
    let o = chat.wait_with_output().unwrap();
    let out = stdout(&o);
    assert_eq!(code(&o), 0, "{out}{}", stderr(&o));
    assert!(out.contains("-> kb.search"), "{out}");
    assert!(out.contains("approval required for turn-1-c3"), "{out}");
    assert!(out.contains("earfcn_dl: null -> 1575"), "{out}");
    assert!(out.contains("-> station.apply_config"), "{out}");
    assert!(out.contains("The cell is on air on band 3"), "{out}");
    let pos = |s: &str| out.find(s).unwrap();
    assert!(pos("-> config.validate") < pos("approval required") && pos("approved") < pos("-> station.apply_config"));

    let station: Value = agent.get(&format!("{}/station", server.1)).call().unwrap().body_mut().read_json().unwrap();
    assert_eq!(station["lifecycle"], "RUNNING");
}

#[test]
fn serve_flags_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = service_config(dir.path());
    let server = serve(&cfg, &["--auto", "--seed", "3"]);
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.post(&format!("{}/sessions", server.1)).send_empty().unwrap();
    let v: Value = resp.body_mut().read_json().unwrap();
    assert_eq!(v["policy"]["require_approval"], false);

    assert_eq!(code(&cellx(&["serve", "--config", "missing.toml"])), 2);
    assert_eq!(code(&cellx(&["serve"])), 2);
    let bad = write(dir.path(), "bad.toml", "listen = 5\n");
    assert_eq!(code(&cellx(&["serve", "--config", &bad])), 2);
    let live = write(
        dir.path(),
        "live.toml",
        "[provider]\nkind = \"chat_completions\"\nendpoint = \"http://127.0.0.1:9\"\nmodel = \"m\"\napi_key_env = \"CELLX_CLI_TEST_UNSET\"\n",
    );
    let o = cellx(&["serve", "--config", &live]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("CELLX_CLI_TEST_UNSET"));
}

#[test]
fn chat_against_nothing_fails() {
    let o = cellx(&["chat", "--endpoint", "http://127.0.0.1:9"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn help_exits_zero() {
    let o = cellx(&["--help"]);
    assert_eq!(code(&o), 0);
    for sub in ["serve", "chat", "ingest", "validate", "scenario"] {
        assert!(stdout(&o).contains(sub));
    }
}
