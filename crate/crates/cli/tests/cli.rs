use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lampwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lampwalk"))
        .args(args)
        .env_remove("LAMPWALK_CACHE_DEPTH")
        .env("LAMPWALK_THREADS", "2")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_state(dir: &Path, n_max: &str) -> PathBuf {
    let state = dir.join("state.json");
    let out = lampwalk(&["construct", "--padding", "8", "--k", "2", "--nmax", n_max, "--out", path(&state)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    state
}

#[test]
fn usage_errors_exit_4() {
    assert_eq!(code(&lampwalk(&["no-such-command"])), 4);
    assert_eq!(code(&lampwalk(&["construct", "--out", "x.json"])), 4);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    assert_eq!(code(&lampwalk(&["construct", "--eps", "0.2", "--nmax", "4", "--out", path(&out)])), 4);
    assert_eq!(code(&lampwalk(&["--help"])), 0);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_lampwalk"))
        .args(["control", "--mmax", "4", "--out", "/dev/null"])
        .env("LAMPWALK_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
}

#[test]
fn construct_writes_a_loadable_state() {
    let dir = tempfile::tempdir().unwrap();
    let state = small_state(dir.path(), "40");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&state).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["steps"].as_array().unwrap().len(), 32);

    let mut tampered = v.clone();
    tampered["steps"][3]["g"] = tampered["steps"][2]["g"].clone();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, tampered.to_string()).unwrap();
    let csv = dir.path().join("p.csv");
    assert_eq!(code(&lampwalk(&["tv-profile", "--state", path(&bad), "--mmax", "1", "--out", path(&csv)])), 4);
}

#[test]
fn claim_check_finds_no_equalities() {
    let dir = tempfile::tempdir().unwrap();
    let state = small_state(dir.path(), "512");
    let report = dir.path().join("claim.json");
    let args = ["claim-check", "--state", path(&state), "--m", "16", "--pairs", "200", "--seed", "9"];
    let out = lampwalk(&[&args[..], &["--out", path(&report)]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["claim"]["equalities"], 0);
    assert_eq!(v["claim"]["pairs_compared"], 400 * 400);

    // with h = e every word equals itself, which the identity run expects
    let out = lampwalk(&[&args[..], &["--identity-h"]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn omega_mass_reports_and_judges() {
    let dir = tempfile::tempdir().unwrap();
    let state = small_state(dir.path(), "40");
    let out = lampwalk(&["omega-mass", "--state", path(&state), "--m", "16", "--samples", "2000"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mass = v["omega"]["mass"]["estimate"].as_f64().unwrap();
    assert_eq!(code(&out), if v["omega"]["above_floor"] == true { 0 } else { 2 }, "mass {mass}");
}

#[test]
fn profile_overflow_exits_3_and_keeps_rows() {
    let dir = tempfile::tempdir().unwrap();
    let state = small_state(dir.path(), "40");
    let csv = dir.path().join("p.csv");
    let out = lampwalk(&[
        "tv-profile", "--state", path(&state), "--mmax", "4", "--support-cap", "500", "--out", path(&csv),
    ]);
    assert_eq!(code(&out), 3);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn control_profile_on_z() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("z.csv");
    let out = lampwalk(&["control", "--group", "z", "--mmax", "256", "--out", path(&csv)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let last = text.lines().last().unwrap();
    let tv: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((tv - 0.06103058297223608).abs() < 1e-12, "{last}");
}

#[test]
fn pipeline_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let out = lampwalk(&["pipeline", "--config", path(&config), "--out-dir", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "profile.csv", "calibration_sweep.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    // the calibrated padding is beyond 2^53 and therefore a string
    assert!(v["stages"]["construction"]["padding"].is_string());
}

#[test]
fn heavytail_verify_passes_at_small_size() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("ht.json");
    let out = lampwalk(&[
        "heavytail", "verify", "--eps", "0.1", "--m", "64", "--samples", "20000", "--seed", "5", "--tail-n", "2000",
        "--out", path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v["verdicts"].as_array().unwrap().iter().all(|x| x["holds"] == true));
}
