use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn hiercubes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiercubes")).args(args).output().unwrap()
}

fn model(name: &str) -> String {
    models().join(format!("{name}.json")).to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn analyze_reports_each_regime() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, verdict) in [
        ("gas_d1", "unique_gibbs_measure"),
        ("fragmenting_d1", "fragmentation"),
        ("condensing_d1", "condensation"),
    ] {
        let out = tmp.path().join(name);
        let run = hiercubes(&["analyze", "--model", &model(name), "--out", out.to_str().unwrap()]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        let report = read_json(&out.join("existence_report.json"));
        assert_eq!(report["report"]["verdict"], verdict, "{name}");
    }
}

#[test]
fn vanishing_activity_samples_the_empty_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let run = hiercubes(&[
        "sample", "--model", &model("zero_d2"), "--window", "0:(0,0)", "--depth", "1",
        "--samples", "4", "--seed", "1", "--format", "json,svg", "--out", out.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let lines = fs::read_to_string(out.join("samples.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4);
    for line in lines.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["blocks"], Value::Array(vec![]));
    }
    let svg = fs::read_to_string(out.join("sample_0000.svg")).unwrap();
    // background and window outline only
    assert_eq!(svg.matches("<rect").count(), 2);
}

#[test]
fn samples_stay_within_the_requested_depth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let run = hiercubes(&[
        "sample", "--model", &model("ones_d1"), "--window", "0:(0)", "--depth", "2",
        "--samples", "200", "--seed", "11", "--format", "json", "--out", out.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let mut seen = std::collections::BTreeSet::new();
    for line in fs::read_to_string(out.join("samples.jsonl")).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        for b in v["blocks"].as_array().unwrap() {
            let scale: i64 = b.as_str().unwrap().split(':').next().unwrap().parse().unwrap();
            seen.insert(scale);
        }
    }
    assert!(seen.iter().all(|s| (-2..=0).contains(s)), "{seen:?}");
    assert!(seen.contains(&-2));
}

#[test]
fn svg_output_for_planar_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("r{i}"))).collect();
    for dir in &dirs {
        let run = hiercubes(&[
            "sample", "--model", &model("parametric_d2"), "--window", "0:(0,0)", "--depth", "2",
            "--samples", "2", "--seed", "3", "--format", "svg", "--out", dir.to_str().unwrap(),
        ]);
        assert!(run.status.success());
    }
    let a = fs::read_to_string(dirs[0].join("sample_0001.svg")).unwrap();
    let b = fs::read_to_string(dirs[1].join("sample_0001.svg")).unwrap();
    assert!(a.starts_with("<?xml") && a.trim_end().ends_with("</svg>"));
    let body = |s: &str| s.lines().filter(|l| !l.starts_with("<!-- hiercubes")).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&a), body(&b));
}

#[test]
fn correlate_matches_hand_computed_covariances() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let run = hiercubes(&[
        "correlate", "--model", &model("ones_d1"), "--window", "0:(0)", "--depth", "2",
        "--probe", "-1:(0);-2:(0)", "--probe", "-2:(0);-2:(3)", "--out", out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = csv_rows(&out.join("covariance.csv"));
    let num = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().unwrap();

    // with z = 1 on a depth-2 binary tree the window has Xi = 26 and each half Xi = 5
    let (p_half, p_quarter) = (5.0 / 26.0, 10.0 / 26.0);
    let nested = &rows[0];
    assert_eq!(&nested[2], "nested");
    assert!((num(nested, 5) - p_half).abs() < 1e-12);
    assert!((num(nested, 6) - p_quarter).abs() < 1e-12);
    assert!((num(nested, 7) + p_half * p_quarter).abs() < 1e-12);

    let disjoint = &rows[1];
    assert_eq!(&disjoint[2], "disjoint");
    assert!((num(disjoint, 7) - 1.0 / 169.0).abs() < 1e-12);
}

#[test]
fn free_gas_has_no_finite_critical_point() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k");
    let run = hiercubes(&["critical", "--coupling", "0", "--alpha", "0.5", "--dim", "1", "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    assert_eq!(read_json(&out.join("critical.json"))["mu_c"], "+inf");
}

#[test]
fn tightening_the_tolerance_refines_the_critical_point() {
    let tmp = tempfile::tempdir().unwrap();
    let mu = |tol: f64| {
        let out = tmp.path().join(format!("k{tol}"));
        let tol = tol.to_string();
        let run = hiercubes(&[
            "critical", "--coupling", "1", "--alpha", "0.5", "--dim", "1", "--tol", &tol,
            "--out", out.to_str().unwrap(),
        ]);
        assert!(run.status.success());
        read_json(&out.join("critical.json"))["mu_c"].as_f64().unwrap()
    };
    let (coarse, fine) = (mu(1e-3), mu(5e-4));
    assert!((coarse - fine).abs() < 1e-3, "{coarse} vs {fine}");
}

#[test]
fn validate_exit_status_tracks_failures() {
    let clean = hiercubes(&["validate"]);
    assert_eq!(clean.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&clean.stdout).contains("FAIL"));

    let perturbed = hiercubes(&["validate", "--inject-perturbation"]);
    assert_eq!(perturbed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&perturbed.stdout).contains("topdown_perturbed"));
}

#[test]
fn missing_model_is_an_input_error() {
    let run = hiercubes(&["analyze", "--model", "/nonexistent/model.json"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).starts_with("error:"));
}
