use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn nof1(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nof1")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn zero_replications_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nof1(&["simulate", "--preset", "fig1", "--M", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn preset_overrides_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let o = nof1(&["simulate", "--preset", "fig1", "--blocks", "8", "--m", "20"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));

    let o = nof1(&["simulate", "--preset", "fig1", "--blocks", "8", "--m", "20", "--force"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["overrides"]["blocks"], 8);
    assert_eq!(manifest["specs"][0]["config"]["k"], 8);
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    // Four methods times eight blocks plus the header.
    assert_eq!(csv.lines().count(), 4 * 8 + 1);
}

#[test]
fn invalid_override_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let o = nof1(&["simulate", "--preset", "fig1", "--alpha", "1.5", "--m", "5", "--force"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = nof1(&["simulate", "--preset", "fig1", "--m", "50", "--seed", "3", "--out", "a"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("NaiveT"));
    let o = nof1(&["simulate", "--manifest", "a/manifest.json", "--out", "b", "--jobs", "1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "report.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let o = nof1(&["simulate", "--manifest", "a/manifest.json", "--seed", "4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn figures_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    assert!(nof1(&["simulate", "--preset", "fig1", "--m", "40", "--out", "r"], dir.path()).status.success());
    let o = nof1(&["figures", "--from", "r/report.csv", "--out", "f1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(nof1(&["figures", "--from", "r/report.csv", "--out", "f2"], dir.path()).status.success());
    let names: Vec<String> = stdout(&o).lines().map(|l| l.rsplit('/').next().unwrap().to_string()).collect();
    assert!(names.contains(&"unrestricted_naivet.svg".to_string()), "{names:?}");
    for n in &names {
        let a = fs::read(dir.path().join("f1").join(n)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("f2").join(n)).unwrap());
        assert!(String::from_utf8(a).unwrap().starts_with("<svg"));
    }

    let o = nof1(&["figures", "--single-run", "--preset", "table2", "--seed", "3", "--out", "s"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 4);
    assert!(dir.path().join("s/cs_pairwise_pair-iptw.svg").is_file());
}

#[test]
fn figures_need_an_existing_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = nof1(&["figures", "--from", "missing.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(nof1(&["figures"], dir.path()).status.code(), Some(2));
}

fn drive_trial(base: &[&str], cwd: &Path) {
    fs::write(cwd.join("cfg.json"), r#"{"k": 4, "t": 2, "scheme": "pairwise", "seed": 11}"#).unwrap();
    let run = |extra: &[&str]| {
        let args: Vec<&str> = ["trial"].iter().chain(base).chain(extra).copied().collect();
        nof1(&args, cwd)
    };
    let o = run(&["new", "--config", "cfg.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let id = stdout(&o).trim().to_string();

    for k in 1..=4 {
        let o = run(&["assign", "--id", &id]);
        assert!(stdout(&o).starts_with(&format!("block {k}: ")), "{}", stdout(&o));
        for t in 1..=2 {
            let y = format!("{}", if k % 2 == 0 { -1.5 } else { 3.0 });
            let o = run(&["record", "--id", &id, "--k", &k.to_string(), "--t", &t.to_string(), "--y", &y]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let o = run(&["close", "--id", &id, "--k", &k.to_string(), "--json"]);
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        let n = v["snapshots"].as_array().unwrap().len();
        assert_eq!(n, if k % 2 == 0 { 2 } else { 0 });
    }

    let o = run(&["record", "--id", &id, "--k", "4", "--t", "1", "--y", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("conflict"));
    let o = run(&["assign", "--id", &id]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("trial_complete"));

    let o = run(&["status", "--id", &id]);
    let text = stdout(&o);
    assert!(text.contains("closed blocks 4 (complete)"), "{text}");
    assert!(text.contains("Pair IPTW") && text.contains("Pair S-IPTW"));
    assert!(stdout(&run(&["list"])).contains(&id));
    assert_eq!(run(&["status", "--id", "nope"]).status.code(), Some(1));
}

#[test]
fn trial_workflow_embedded() {
    let dir = tempfile::tempdir().unwrap();
    drive_trial(&["--data-dir", "logs"], dir.path());
    assert_eq!(fs::read_dir(dir.path().join("logs")).unwrap().count(), 1);
}

/// Keeps the server's stdout open for its lifetime.
struct Server(Child, #[allow(dead_code)] BufReader<std::process::ChildStdout>);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn trial_workflow_against_server() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_nof1"))
        .args(["serve", "--port", "0", "--data-dir", "srv"])
        .current_dir(dir.path())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    let mut reader = BufReader::new(child.stdout.take().unwrap());
    reader.read_line(&mut line).unwrap();
    let _server = Server(child, reader);
    let url = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    drive_trial(&["--server", &url], dir.path());
    assert_eq!(fs::read_dir(dir.path().join("srv")).unwrap().count(), 1);
}

#[test]
fn serve_reports_a_taken_port() {
    let dir = tempfile::tempdir().unwrap();
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = nof1(&["serve", "--port", &port], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("binding"));
}
