use std::path::Path;
use std::process::{Command, Output};

fn fridgepfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fridgepfc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_prints_metrics_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        dir.path(),
        "seed = 3\nduration = 900\nthreads = 1\n[population]\nsize = 300\n",
    );
    let out = dir.path().join("out");
    let o = fridgepfc(&["simulate", &scenario, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(metrics["devices"], 300);
    assert!(out.join("metrics.json").is_file());
    let rows = std::fs::read_to_string(out.join("per_step.csv")).unwrap().lines().count();
    assert_eq!(rows, 901);
}

#[test]
fn overrides_replace_scenario_values() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "duration = 900\nthreads = 1\n");
    let o = fridgepfc(&[
        "simulate", &scenario, "--devices", "120", "--duration", "300", "--mode", "simple2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(metrics["devices"], 120);
    assert_eq!(metrics["controller"], "simple2");
}

#[test]
fn gen_signal_writes_one_row_per_second() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("df.csv");
    let o = fridgepfc(&[
        "gen-signal", "--kind", "large-bias", "--duration", "120", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t_seconds,delta_f_hz");
    assert_eq!(text.lines().count(), 121);
}

#[test]
fn errors_are_reported_as_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "duration = 0\n");
    let o = fridgepfc(&["simulate", &scenario]);
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    let line = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["error"], "scenario");
    assert!(v["message"].as_str().unwrap().contains("duration"));

    let o = fridgepfc(&["simulate", dir.path().join("missing.toml").to_str().unwrap()]);
    let stderr = String::from_utf8(o.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(v["error"], "io");
}

#[test]
fn sweep_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        dir.path(),
        "duration = 300\nthreads = 1\n[population]\nsize = 100\n",
    );
    let out = dir.path().join("rows.csv");
    let o = fridgepfc(&[
        "sweep", &scenario, "--axis", "kc", "--values", "0,5e-5", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);
    assert!(dir.path().join("rows.summary.csv").is_file());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
}

#[test]
fn tune_gain_prints_both_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "[population]\nsize = 2000\n");
    let o = fridgepfc(&["tune-gain", &scenario, "--no-sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("kc_upper = "));
    assert!(stdout.contains("kc_lower = "));
}

#[test]
fn verify_propositions_quick_lists_every_check() {
    let o = fridgepfc(&["verify-propositions", "--quick", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["name"].is_string() && r["passed"].is_boolean()));
}
