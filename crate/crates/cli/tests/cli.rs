use std::path::Path;
use std::process::{Command, Output};

use rcmlab_core::environment::io::read_env;
use serde_json::{json, Value};
use tempfile::TempDir;

fn run(dir: &Path, cmd: &str, cfg: &Value, extra: &[&str]) -> Output {
    let cfg_path = dir.join(format!("{cmd}.json"));
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_rcmlab"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg_path)
        .args(extra)
        .env_remove("RCMLAB_THREADS")
        .output()
        .unwrap()
}

fn base(d: usize, side: usize) -> Value {
    json!({ "geometry": { "d": d, "side": side }, "environment": { "kind": "uniform-elliptic-iid", "lower": 0.5, "upper": 2.0 }, "seed": 7 })
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn env_round_trip_and_bad_magic() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = base(2, 8);
    cfg["environment"] = json!({ "kind": "constant", "level": 1.5 });
    let out = tmp.path().join("a");
    let o = run(tmp.path(), "env", &cfg, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(out.join("env.rcm")).unwrap();
    let field = read_env(bytes.as_slice()).unwrap();
    assert!(field.values().iter().all(|&v| v == 1.5));
    let meta: Value = serde_json::from_str(&read(&out, "env.meta.json")).unwrap();
    assert_eq!(meta["meta"]["config_hash"].as_str().unwrap().len(), 64);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_env(bad.as_slice())
        .unwrap_err()
        .to_string()
        .contains("bad format"));
}

#[test]
fn heat_rows_and_delta() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = base(2, 8);
    cfg["heat"] = json!({ "times": [0.0, 0.5, 1.0], "wrap": "report" });
    let o = run(
        tmp.path(),
        "heat",
        &cfg,
        &["--out", tmp.path().to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(tmp.path(), "heat.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# rcmlab"));
    assert_eq!(lines[1], "t,x,y,prob,hk");
    assert_eq!(lines.len() - 2, 3 * 64);
    let t0: Vec<&str> = lines[2..66].to_vec();
    assert!(
        t0.iter()
            .filter(|l| l.split(',').nth(3) == Some("1.0"))
            .count()
            == 1
    );
    assert!(
        t0.iter()
            .filter(|l| l.split(',').nth(3) == Some("0.0"))
            .count()
            == 63
    );
}

#[test]
fn verify_clean_then_injected() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = base(2, 16);
    cfg["verify"] = json!({ "times": [4.0, 8.0], "same_field": true });
    let o = run(
        tmp.path(),
        "verify",
        &cfg,
        &["--out", tmp.path().to_str().unwrap()],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(read(tmp.path(), "violations.csv").lines().count(), 2);
    let rep: Value = serde_json::from_str(&read(tmp.path(), "envelope.json")).unwrap();
    let checked = rep["report"]["report"]["checked"].as_u64().unwrap() as usize;
    let svg = read(tmp.path(), "envelope.svg");
    assert_eq!(svg.matches("<circle").count(), checked);

    cfg["verify"]["c2_scale"] = json!(0.25);
    let o = run(
        tmp.path(),
        "verify",
        &cfg,
        &["--out", tmp.path().to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(read(tmp.path(), "violations.csv").lines().count() > 2);
}

#[test]
fn chain_case_one_is_precondition() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = base(2, 16);
    cfg["chain"] = json!({ "x": [1, 0], "t": 64.0 });
    let o = run(
        tmp.path(),
        "chain",
        &cfg,
        &["--out", tmp.path().to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("near-diagonal"));
}

#[test]
fn moments_ladder_length() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = base(2, 64);
    cfg["moments"] = json!({ "sizes": 5, "replicas": 120, "centering": 5.0 });
    let o = run(
        tmp.path(),
        "moments",
        &cfg,
        &["--out", tmp.path().to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(tmp.path(), "ladder.csv").lines().count(), 2 + 5);
}

#[test]
fn green_refuses_two_dimensions() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        tmp.path(),
        "green",
        &base(2, 8),
        &["--out", tmp.path().to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("transient dimension"));
}

#[test]
fn exit_codes_for_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rcmlab"))
        .args([
            "heat",
            "--config",
            tmp.path().join("missing.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
    let mut cfg = base(2, 8);
    cfg["unexpected"] = json!(1);
    let o = run(tmp.path(), "heat", &cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn seed_override_changes_output() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(
        tmp.path(),
        "env",
        &base(2, 8),
        &["--out", a.to_str().unwrap()],
    );
    run(
        tmp.path(),
        "env",
        &base(2, 8),
        &["--out", b.to_str().unwrap(), "--seed", "8"],
    );
    assert_ne!(
        std::fs::read(a.join("env.rcm")).unwrap(),
        std::fs::read(b.join("env.rcm")).unwrap()
    );
}
