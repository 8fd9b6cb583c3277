use std::path::Path;
use std::process::{Command, Output};

fn chns(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chns"))
        .args(args)
        .current_dir(dir)
        .env("CHNS_THREADS", "1")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn rest_state_csv_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "rest.json", r#"{"grid": {"nx": 8, "ny": 8}, "time": {"t_end": 0.005}}"#);
    let out = chns(d, &["simulate", "--config", "rest.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("o/diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,mean_phi,E_phi,E_kin,E_total,u_L2,phi_H1,control_L2");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let cols: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(cols[1..].iter().all(|&v| v == 0.0), "{row}");
    }
    let m = read_json(&d.join("o/manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn output_dir_from_config_and_snapshots_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "run.json",
        r#"{"grid": {"nx": 8, "ny": 8}, "time": {"t_end": 0.01, "snapshot_every": 5},
            "init": {"kind": "spinodal", "amplitude": 0.1}, "output": {"dir": "results"}}"#,
    );
    assert_eq!(chns(d, &["simulate", "--config", "run.json"]).status.code(), Some(0));
    let last = chns_core::io::read_snapshot(&d.join("results/snapshot-000002.chns")).unwrap();
    assert!((last.t - 0.01).abs() < 1e-15);

    // continue from the written snapshot
    write(
        d,
        "cont.json",
        r#"{"grid": {"nx": 8, "ny": 8}, "time": {"t_start": 0.01, "t_end": 0.02},
            "init": {"kind": "file", "path": "results/snapshot-000002.chns"}}"#,
    );
    assert_eq!(chns(d, &["simulate", "--config", "cont.json", "--out", "c"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "bad.json", r#"{"time": {"dt": 0}}"#);
    let out = chns(d, &["simulate", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema violation"));

    write(d, "unknown.json", r#"{"grid": {"nx": 8, "ny": 8, "nz": 8}}"#);
    assert_eq!(chns(d, &["simulate", "--config", "unknown.json"]).status.code(), Some(1));
    assert_eq!(chns(d, &["simulate", "--config", "missing.json"]).status.code(), Some(1));
    assert_eq!(chns(d, &["simulate"]).status.code(), Some(1));
    assert_eq!(chns(d, &["frobnicate", "--config", "bad.json"]).status.code(), Some(1));
}

#[test]
fn blowup_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "b.json",
        r#"{"grid": {"nx": 8, "ny": 8}, "time": {"t_end": 0.01},
            "init": {"kind": "spinodal", "amplitude": 0.5}, "scheme": {"blowup_cap": 1e-3}}"#,
    );
    let out = chns(d, &["simulate", "--config", "b.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_radius_optimize_on_rest_state() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "r.json",
        r#"{"grid": {"nx": 8, "ny": 8}, "params": {"R": 0}, "time": {"t_end": 0.02},
            "optimizer": {"population": 4, "elites": 2, "iterations": 2}}"#,
    );
    let out = chns(d, &["optimize", "--config", "r.json", "--out", "o", "--seed", "17"]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&d.join("o/value.json"));
    assert_eq!(v["value"], 0.0);
    assert_eq!(v["seed"], 17);
    assert_eq!(read_json(&d.join("o/manifest.json"))["seed"], 17);
}

#[test]
fn hjb_check_table() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "h.json", r#"{"grid": {"nx": 16, "ny": 16}}"#);
    let out = chns(d, &["hjb-check", "--config", "h.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0));
    let h = read_json(&d.join("o/hjb.json"));
    let rows = h["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(h["max_gap"].as_f64().unwrap() <= 1e-3);
    for r in rows {
        assert!(r["gap"].as_f64().unwrap() <= 1e-12);
    }
}

#[test]
fn mass_audit_passes_and_dpp_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "a.json",
        r#"{"grid": {"nx": 8, "ny": 8}, "time": {"dt": 5e-3, "t_end": 0.04},
            "init": {"kind": "spinodal", "amplitude": 0.2},
            "optimizer": {"population": 6, "elites": 2, "iterations": 2, "fd_passes": 0, "intervals": 2}}"#,
    );
    let out = chns(d, &["audit", "mass", "--config", "a.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0));
    let a = read_json(&d.join("o/audit-mass.json"));
    assert_eq!(a["pass"], true);
    assert_eq!(a["name"], "mass");

    let out = chns(d, &["dpp-check", "--config", "a.json", "--out", "p", "--t-mid", "0.02"]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 3);
    let r = read_json(&d.join("p/dpp.json"));
    assert_eq!(r["report"]["t_mid"], 0.02);
    assert!(r["report"]["slack"].as_f64().unwrap() <= 1e-9);
    assert_eq!(read_json(&d.join("p/manifest.json"))["args"]["t_mid"], 0.02);

    let out = chns(d, &["dpp-check", "--config", "a.json", "--out", "q", "--t-mid", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
}
