use std::collections::BTreeMap;
use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::Duration;

use attnpipe_cli::RunConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_attnpipe"));
    c.env_remove("ATTNPIPE_SEED").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_record(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let last = err.lines().last().expect("error record on stderr");
    serde_json::from_str(last).unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn thresholds_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["--out", tmp.path().to_str().unwrap(), "reproduce-thresholds"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("60,0.5,0.05,0.622498,0.6225"), "{text}");
    assert!(text.contains("45,0.5,0.05,0.639997,0.6400"));
    assert!(text.contains("200,0.5,0.05,0.568612,0.5680"));
    let dir = text.lines().last().unwrap();
    let f = files(Path::new(dir));
    assert!(f.contains_key("thresholds.csv") && f.contains_key("thresholds.json") && f.contains_key("config.json"));
}

#[test]
fn unknown_policy_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["--out", tmp.path().to_str().unwrap(), "evaluate", "--policy", "random"]);
    assert_eq!(o.status.code(), Some(2));
    let rec = error_record(&o);
    assert_eq!(rec["kind"], "ConfigInvalid");
    assert!(rec["message"].as_str().unwrap().starts_with("policies"));
    // nothing was written
    assert_eq!(fs::read_dir(tmp.path()).map(|d| d.count()).unwrap_or(0), 0);
}

#[test]
fn config_file_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, r#"{"n_runs": 10, "polices": ["loso"]}"#).unwrap();
    let o = run(&["--config", path.to_str().unwrap(), "reproduce-thresholds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("polices"));
}

#[test]
fn config_init_round_trips() {
    let o = run(&["config", "init"]);
    assert!(o.status.success());
    let cfg = RunConfig::from_json(&stdout(&o)).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn seed_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("c.json");
    fs::write(&cfg_path, r#"{"seed": 5}"#).unwrap();
    let seed_of = |dir: &Path| -> u64 {
        let c = RunConfig::from_json(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
        assert_eq!(c.sim.seed, c.seed);
        c.seed
    };
    let d1 = tmp.path().join("a");
    let o = run(&["--config", cfg_path.to_str().unwrap(), "--run-dir", d1.to_str().unwrap(), "reproduce-thresholds"]);
    assert!(o.status.success());
    assert_eq!(seed_of(&d1), 5);

    let d2 = tmp.path().join("b");
    let o = bin()
        .env("ATTNPIPE_SEED", "7")
        .args(["--config", cfg_path.to_str().unwrap(), "--run-dir", d2.to_str().unwrap(), "reproduce-thresholds"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(seed_of(&d2), 7);

    let d3 = tmp.path().join("c");
    let o = bin()
        .env("ATTNPIPE_SEED", "7")
        .args(["--config", cfg_path.to_str().unwrap(), "--seed", "9", "--run-dir", d3.to_str().unwrap(), "reproduce-thresholds"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(seed_of(&d3), 9);

    let o = bin().env("ATTNPIPE_SEED", "x").args(["reproduce-thresholds"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = RunConfig::default();
    cfg.sim.n_participants = 3;
    cfg.sim.n_without_gaze = 1;
    cfg.sim.trials_per_condition = 6;
    cfg.n_runs = 2;
    cfg.seed = 4;
    let p = dir.join("small.json");
    fs::write(&p, cfg.to_json()).unwrap();
    p
}

#[test]
fn evaluate_is_reproducible_and_independent_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let d = tmp.path().join(name);
        let o = run(&["--config", cfg.to_str().unwrap(), "--run-dir", d.to_str().unwrap(), "--jobs", jobs, "evaluate"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(files(&d));
    }
    let names: Vec<&String> = outputs[0].keys().collect();
    for f in ["overview.csv", "summary.csv", "summary.json", "runs.csv", "reports.json", "positions.csv", "position_pairs.csv", "skipped.csv"] {
        assert!(outputs[0].contains_key(f), "{f} missing from {names:?}");
    }
    assert_eq!(outputs[0], outputs[1]);
    // the copied config records jobs, everything else must agree
    for (k, v) in &outputs[0] {
        if k != "config.json" {
            assert_eq!(Some(v), outputs[2].get(k), "{k}");
        }
    }
    let overview = String::from_utf8(outputs[0]["overview.csv"].clone()).unwrap();
    let rows: Vec<&str> = overview.lines().collect();
    assert_eq!(rows.len(), 1 + 3 + 2);
    assert!(rows[0].starts_with("participant,trial_oblivious/eeg/mean,trial_oblivious/eeg/std"));

    // rerunning from the copied config reproduces the results
    let d = tmp.path().join("rerun");
    let copied = tmp.path().join("a").join("config.json");
    let o = run(&["--config", copied.to_str().unwrap(), "--run-dir", d.to_str().unwrap(), "evaluate"]);
    assert!(o.status.success());
    assert_eq!(files(&d), outputs[0]);
}

#[test]
fn simulate_then_psd_from_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let sim = tmp.path().join("sim");
    let o = run(&["--config", cfg.to_str().unwrap(), "--run-dir", sim.to_str().unwrap(), "simulate", "--trials", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = sim.join("dataset");
    assert!(data.join("sim.json").is_file());
    for p in ["P01", "P02", "P03"] {
        assert!(data.join(p).join("eeg.csv").is_file());
    }
    let psd = tmp.path().join("psd");
    let o = run(&["--data", data.to_str().unwrap(), "--run-dir", psd.to_str().unwrap(), "psd"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(psd.join("psd_features.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn serve_and_classify_over_loopback() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let addr = format!("127.0.0.1:{}", free_port());
    let serve_dir = tmp.path().join("serve");
    let mut server = bin()
        .args(["--config", cfg.to_str().unwrap(), "--run-dir", serve_dir.to_str().unwrap()])
        .args(["serve", "--participant", "1", "--speed", "0", "--address", &addr])
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let cls_dir = tmp.path().join("classify");
    let mut out = None;
    for _ in 0..50 {
        let o = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--run-dir",
            cls_dir.to_str().unwrap(),
            "classify",
            "--train-participant",
            "1",
            "--pipeline",
            "eeg",
            "--address",
            &addr,
        ]);
        if o.status.success() {
            out = Some(o);
            break;
        }
        assert_eq!(error_record(&o)["kind"], "ConnectionLost");
        thread::sleep(Duration::from_millis(200));
    }
    let o = out.expect("classifier connected");
    assert!(server.wait().unwrap().success());
    let lines: Vec<&str> = std::str::from_utf8(&o.stdout).unwrap().lines().collect();
    // 12 trials, 13 hops each, then the run directory
    assert_eq!(lines.len(), 12 * 13 + 1);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert!(first["label"].is_string());
    assert!(cls_dir.join("model.json").is_file());
    assert_eq!(fs::read_to_string(cls_dir.join("predictions.csv")).unwrap().lines().count(), 12 * 13 + 1);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(serve_dir.join("serve_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["frames_sent"], summary["frames_total"]);
}
