use std::path::Path;
use std::process::{Command, Output};

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run lab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("out/report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn single_check_passes_and_writes_report() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["--out", "out", "verify", "gauss-bonnet-closure"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = report(d.path());
    assert_eq!(r["checks"].as_array().unwrap().len(), 1);
    assert_eq!(r["checks"][0]["status"], "pass");
    assert!(r["checks"][0].get("runtime_ms").is_none());
    assert!(d.path().join("out/timings.json").exists());
}

#[test]
fn reports_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let args = ["--out", "out", "verify", "curvature-diameter-constant"];
    assert_eq!(lab(d.path(), &args).status.code(), Some(0));
    let first = std::fs::read(d.path().join("out/report.json")).unwrap();
    assert_eq!(lab(d.path(), &args).status.code(), Some(0));
    let second = std::fs::read(d.path().join("out/report.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn short_range_is_measured_only() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["--out", "out", "--rmax", "20", "verify", "curvature-distance-band"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(d.path());
    assert_eq!(r["checks"][0]["status"], "measured-only");
    assert!(r["checks"][0]["note"].as_str().unwrap().contains("window too short"));
}

#[test]
fn loose_tolerance_propagates_to_drift() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["--out", "out", "--tol", "1e-6", "verify", "conserved-drift"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = report(d.path());
    let tol = r["checks"][0]["tolerance"].as_f64().unwrap();
    assert!((tol / 1e-5 - 1.0).abs() < 1e-12, "{tol}");
}

#[test]
fn config_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(lab(d.path(), &["verify", "no-such-check"]).status.code(), Some(2));
    assert_eq!(lab(d.path(), &["--tol", "0.1", "bryant"]).status.code(), Some(2));
    std::fs::write(d.path().join("bad.json"), r#"{"rmax": 40}"#).unwrap();
    assert_eq!(lab(d.path(), &["--config", "bad.json", "bryant"]).status.code(), Some(2));
    assert_eq!(lab(d.path(), &["asymptotics", "--window", "200:50"]).status.code(), Some(2));
}

#[test]
fn config_file_is_honoured() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.json"), r#"{"r_max": 30, "out": "from-config"}"#).unwrap();
    let o = lab(d.path(), &["--config", "c.json", "bryant"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(d.path().join("from-config/profile.json").exists());
    assert!(stdout(&o).contains("r_max = 30"));
}

#[test]
fn bryant_then_levels_from_saved_profile() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(lab(d.path(), &["--out", "out", "--rmax", "40", "bryant"]).status.code(), Some(0));
    let o = lab(
        d.path(),
        &[
            "--out", "out", "levels", "--profile", "out/profile.json", "--min", "1", "--max", "30",
            "--count", "10", "--spacing", "log",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("out/levels.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("lambda,r,area,diameter,"));
}

#[test]
fn asymptotics_window_too_short_fails() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["--out", "out", "--rmax", "60", "asymptotics", "--window", "50:200"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("raise r_max"));
}

#[test]
fn pick_refuses_on_bryant() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["--out", "out", "pick", "--model", "bryant"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("refused"));
}

#[test]
fn pick_on_cigar_line_writes_tables() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["--out", "out", "pick", "--model", "cigar-line", "--rhat", "0.5", "--jmax", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(d.path().join("out/pick.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/pick.json")).unwrap()).unwrap();
    assert_eq!(v["sequence"]["points"].as_array().unwrap().len(), 3);
}
