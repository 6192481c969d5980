use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cyma_core::harness::{run_checks, CheckOptions, RunConfig, Suite, MONITOR_HEADER};
use cyma_core::io::read_scalar;

const MINIMAL: &str = r#"{
  "geometry": {"n": 1, "res": 64},
  "metric": {"kind": "flat"},
  "problem": {"mode": "solve", "lambda": 1, "f": {"constant": 0}}
}"#;

const CALABI: &str = r#"{
  "geometry": {"n": 1, "res": 64},
  "metric": {"kind": "flat"},
  "problem": {"mode": "calabi", "f": {"constant": 1, "modes": [{"index": [1, 0], "amplitude": 0.3}]}},
  "output": {"directory": "calabi_out"}
}"#;

fn cyma(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cyma"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// The minimal config with another `problem.f` and a `solver` block.
fn with(f: &str, solver: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
    v["problem"]["f"] = serde_json::from_str(f).unwrap();
    v["solver"] = serde_json::from_str(solver).unwrap();
    v.to_string()
}

#[test]
fn minimal_config_solves_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "min.json", MINIMAL);
    let out = dir.path().join("o");
    let r = cyma(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let phi = read_scalar(&out.join("solution.cyf")).unwrap();
    assert_eq!(phi.sup_norm(), 0.0);
    assert!(out.join("solution.meta.json").exists());
    let csv = fs::read_to_string(out.join("monitors.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(MONITOR_HEADER));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn schema_violations_exit_3_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            MINIMAL.replace("\"lambda\": 1", "\"lambda\": -1"),
            "problem.lambda",
        ),
        (
            MINIMAL.replace("\"res\": 64", "\"res\": 64, \"shape\": 3"),
            "shape",
        ),
        (
            MINIMAL.replace("\"flat\"", "\"hermitian_nonkahler\", \"epsilon\": 0.1"),
            "metric",
        ),
        (
            MINIMAL.replace("\"solve\"", "\"envelope\""),
            "problem.obstacle",
        ),
        (
            MINIMAL
                .replace("\"solve\"", "\"singular\"")
                .replace("\"lambda\": 1, ", ""),
            "problem.klt",
        ),
        (MINIMAL.replace("\"res\": 64", "\"res\": 60"), "geometry"),
        (
            "{\"geometry\": {\"n\": 1,\n \"res\": }".to_string(),
            "line 2 column",
        ),
    ];
    for (i, (text, key)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{i}.json"), text);
        let out = dir.path().join(format!("out{i}"));
        let r = cyma(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        let err = String::from_utf8_lossy(&r.stderr);
        assert_eq!(r.status.code(), Some(3), "case {i}: {err}");
        assert!(err.contains(key), "case {i}: {err}");
        assert!(!out.exists(), "case {i} wrote artifacts");
    }
}

#[test]
fn calabi_report_and_relative_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "calabi.json", CALABI);
    let r = cyma(&["run", cfg.to_str().unwrap(), "--no-timestamp"]);
    assert_eq!(r.status.code(), Some(0));
    let out = dir.path().join("calabi_out");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let c = report["solution"]["c"].as_f64().unwrap();
    assert!((c - 1.0).abs() < 1e-8, "{c}");
    assert_eq!(report["status"], "ok");
    assert!(report.get("wall_time_seconds").is_none());
}

#[test]
fn reports_are_byte_identical_without_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "calabi.json", CALABI);
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let r = cyma(&[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--no-timestamp",
        ]);
        assert_eq!(r.status.code(), Some(0));
        reports.push(fs::read(out.join("report.json")).unwrap());
        assert!(fs::read(out.join("solution.cyf")).is_ok());
    }
    assert_eq!(reports[0], reports[1]);
    let stamped = dir.path().join("stamped");
    cyma(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        stamped.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(stamped.join("report.json")).unwrap();
    assert!(text.contains("wall_time_seconds"));
}

#[test]
fn solver_failure_exits_2_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = with(
        r#"{"modes": [{"index": [1, 0], "amplitude": 3}]}"#,
        r#"{"max_newton": 1}"#,
    );
    let cfg = write_config(dir.path(), "fail.json", &text);
    let out = dir.path().join("o");
    let r = cyma(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_eq!(
        r.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "failed");
    assert!(report["error"].as_str().unwrap().contains("Newton"));
}

#[test]
fn continuity_monitors_have_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let text = with(
        r#"{"modes": [{"index": [1, 0], "amplitude": 0.5}]}"#,
        r#"{"schedules": {"t": [0, 0.5, 1]}}"#,
    );
    let cfg = write_config(dir.path(), "path.json", &text);
    let out = dir.path().join("o");
    let r = cyma(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("monitors.csv")).unwrap();
    let steps: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(steps, ["0", "0.5", "1"]);
}

#[test]
fn info_describes_field_and_flags_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "min.json", MINIMAL);
    let out = dir.path().join("o");
    cyma(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let path = out.join("solution.cyf");
    let r = cyma(&["info", path.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("res: 64"));
    let mut bytes = fs::read(&path).unwrap();
    bytes[3] = b'2';
    let bad = dir.path().join("bad.cyf");
    fs::write(&bad, bytes).unwrap();
    assert_eq!(
        cyma(&["info", bad.to_str().unwrap()]).status.code(),
        Some(10)
    );
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            RunConfig::from_json(&fs::read_to_string(&p).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../../../config.schema.json")).unwrap();
    assert_eq!(schema["additionalProperties"], false);
}

#[test]
fn flipped_ddc_fails_the_smooth_suite() {
    let report = run_checks(
        Suite::Smooth,
        &CheckOptions {
            ddc_sign: -1.0,
            timing: false,
        },
    );
    assert!(!report.pass);
    assert!(!report.get("smooth.mass_hermitian_witness").unwrap().pass);
    assert!(report.checks.windows(2).all(|w| w[0].id < w[1].id));
}

#[test]
fn envelope_suite_reports_sandwich_and_orthogonality() {
    let report = run_checks(
        Suite::Envelope,
        &CheckOptions {
            ddc_sign: 1.0,
            timing: false,
        },
    );
    for id in ["envelope.sandwich", "envelope.orthogonality"] {
        let c = report.get(id).unwrap();
        assert!(c.measured.is_some() && c.pass, "{c:?}");
    }
    let json = report.to_json();
    assert!(json.contains("\"seed\"") && !json.contains("wall_time"));
}
