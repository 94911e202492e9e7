use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hiercubes_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut std::os::raw::c_char) -> String {
    if s.is_null() {
        return "<null>".into();
    }
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    hc_string_free(s);
    out
}

fn constant_model(z: f64) -> *mut HcModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { hc_model_constant(1, 2, z, &mut m) }, HcStatus::Ok);
    m
}

#[test]
fn exact_values_through_the_c_interface() {
    let m = constant_model(1.0);
    let window = c("0:(0)");
    unsafe {
        let mut xi = HcLogReal { kind: HcLogKind::Zero, ln: 0.0 };
        assert_eq!(hc_partition_function(m, window.as_ptr(), 2, &mut xi), HcStatus::Ok);
        assert_eq!(xi.kind, HcLogKind::Finite);
        assert!((xi.ln.exp() - 26.0).abs() < 1e-12);

        let mut p = 0.0;
        let pair = c("-2:(0); -2:(3)");
        assert_eq!(hc_exact_marginal(m, pair.as_ptr(), window.as_ptr(), 2, &mut p), HcStatus::Ok);
        assert!((p - 2.0 / 13.0).abs() < 1e-12);

        let mut rho = 0.0;
        assert_eq!(hc_occupation_ratio(m, window.as_ptr(), 2, &mut rho), HcStatus::Ok);
        assert!((rho - 1.0 / 26.0).abs() < 1e-15);
        hc_model_free(m);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let m = constant_model(1.0);
    unsafe {
        let mut xi = HcLogReal { kind: HcLogKind::Zero, ln: 0.0 };
        let bad = c("0:[0]");
        assert_eq!(hc_partition_function(m, bad.as_ptr(), 2, &mut xi), HcStatus::InvalidArgument);
        assert!(take(hc_last_error_message()).contains("block notation"));

        assert_eq!(hc_partition_function(ptr::null(), bad.as_ptr(), 2, &mut xi), HcStatus::NullPointer);
        assert!(take(hc_last_error_message()).contains("model"));

        // effective activities 1 on every scale above 0: the ancestor chain is not summable
        let json = c(r#"{"kind": "homogeneous", "effective": {"values": {"0": 1.0}, "above": {"geometric": 1.0}}}"#);
        let mut condensing = ptr::null_mut();
        assert_eq!(hc_model_from_json(json.as_ptr(), &mut condensing), HcStatus::Ok);
        let mut p = 0.0;
        let q = c("0:(0)");
        let status = hc_exact_marginal(condensing, q.as_ptr(), ptr::null(), HC_DEPTH_LIMIT, &mut p);
        assert_eq!(status, HcStatus::Refused, "{}", take(hc_last_error_message()));
        hc_model_free(condensing);

        let window = c("0:(0)");
        assert_eq!(hc_partition_function(m, window.as_ptr(), 2, &mut xi), HcStatus::Ok);
        assert!(hc_last_error_message().is_null());

        let mut s = ptr::null_mut();
        assert_eq!(hc_sampler_new(m, window.as_ptr(), 2, 42, 0.0, &mut s), HcStatus::InvalidArgument);
        assert!(s.is_null());
        hc_model_free(m);
    }
}

#[test]
fn models_round_trip_through_json() {
    let json = c(r#"{"d": 1, "M": 2, "kind": "parametric", "mu": -1.0, "J": 0.0, "alpha": 0.5}"#);
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(hc_model_from_json(json.as_ptr(), &mut m), HcStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(hc_model_to_json(m, &mut out), HcStatus::Ok);
        assert!(take(out).contains("parametric"));
        let mut report = ptr::null_mut();
        assert_eq!(hc_existence_report(m, &mut report), HcStatus::Ok);
        assert!(take(report).contains("unique_gibbs_measure"));
        hc_model_free(m);
    }
}

#[test]
fn samples_are_reproducible() {
    let m = constant_model(1.0);
    let window = c("0:(0)");
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(hc_sampler_new(m, window.as_ptr(), 3, HcSamplerKind::BernoulliMax as i32, 0.0, &mut s), HcStatus::Ok);
        let draw = |i| {
            let mut out = ptr::null_mut();
            assert_eq!(hc_sampler_sample_json(s, 99, i, &mut out), HcStatus::Ok);
            take(out)
        };
        assert_eq!(draw(5), draw(5));
        hc_sampler_free(s);
        hc_model_free(m);
    }
}

#[test]
fn critical_point_and_validation() {
    unsafe {
        let mut mu_c = 0.0;
        assert_eq!(hc_critical_mu(1, 0.0, 0.5, 1e-6, &mut mu_c, ptr::null_mut()), HcStatus::Ok);
        assert_eq!(mu_c, f64::INFINITY);
        let mut failed = 99;
        assert_eq!(hc_validate(1, &mut failed, ptr::null_mut()), HcStatus::Ok);
        assert_eq!(failed, 1);
    }
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(hc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hiercubes.h")).unwrap();
    let source = include_str!("../src/lib.rs");
    let names: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(names.len() >= 15);
    for name in names {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct HcModel HcModel;"));
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = artifact_dir().join("libhiercubes_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let build = Command::new("cc")
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
