use std::ffi::{CStr, CString};
use std::ptr;

use fieldmax_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = fm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn model_and_sampler_round_trip() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(fm_model_new(c("geometric").as_ptr(), 0.5, 0.0, &mut model), FmStatus::Ok);
        let mut r = 0.0;
        assert_eq!(fm_model_covariance(model, 1, -1, &mut r), FmStatus::Ok);
        assert_eq!(r, 0.25);

        let mut sampler = ptr::null_mut();
        assert_eq!(fm_sampler_new(model, 6, 5, 0, &mut sampler), FmStatus::Ok);
        assert_eq!(CStr::from_ptr(fm_sampler_method(sampler)).to_str().unwrap(), "dense");
        let mut a = vec![0.0; 30];
        let mut b = vec![0.0; 30];
        assert_eq!(fm_sampler_sample(sampler, 9, 2, a.as_mut_ptr(), a.len()), FmStatus::Ok);
        assert_eq!(fm_sampler_sample(sampler, 9, 2, b.as_mut_ptr(), b.len()), FmStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(fm_sampler_sample(sampler, 9, 2, b.as_mut_ptr(), 29), FmStatus::BufferTooSmall);
        assert!(last_error().contains("30"));
        fm_sampler_free(sampler);
        fm_model_free(model);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(fm_model_new(c("geometric").as_ptr(), 1.5, 0.0, &mut model), FmStatus::InvalidArgument);
        assert!(model.is_null());
        assert!(last_error().starts_with("InvalidParameter"));
        assert_eq!(fm_model_new(ptr::null(), 0.5, 0.0, &mut model), FmStatus::NullPointer);
        assert_eq!(fm_model_new(c("fractal").as_ptr(), 0.5, 0.0, &mut model), FmStatus::InvalidArgument);

        assert_eq!(fm_model_new(c("independent").as_ptr(), 0.0, 0.0, &mut model), FmStatus::Ok);
        let mut sampler = ptr::null_mut();
        assert_eq!(fm_sampler_new(model, 0, 4, 0, &mut sampler), FmStatus::DegenerateShape);
        fm_model_free(model);

        let mut out = 0.0;
        assert_eq!(fm_bvn_upper_orthant(0.0, 0.0, 1.0, &mut out), FmStatus::InvalidArgument);
        assert_eq!(fm_exact_iid_joint(c("point(0.5)").as_ptr(), 0.5, 0.9, 4, &mut out), FmStatus::OrderViolation);
        assert_eq!(fm_calibrate_level(c("gaussian").as_ptr(), 10.0, 20.0, &mut out), FmStatus::TargetOutOfRange);
        assert_eq!(fm_bvn_upper_orthant(0.0, 0.0, 0.0, ptr::null_mut()), FmStatus::NullPointer);
        assert_eq!(CStr::from_ptr(fm_status_name(FmStatus::EmbeddingNotPsd)).to_str().unwrap(), "EmbeddingNotPSD");

        assert_eq!(fm_bvn_upper_orthant(0.0, 0.0, 0.5, &mut out), FmStatus::Ok);
        assert!(fm_last_error_message().is_null());
    }
}

#[test]
fn scalar_functions() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(fm_limit_value(c("point(0.5)").as_ptr(), 2.0, 1.0, &mut out), FmStatus::Ok);
        assert!((out - (-1.5f64).exp()).abs() < 1e-15);
        assert_eq!(fm_tail(c("chi(2)").as_ptr(), 2.0, &mut out), FmStatus::Ok);
        assert!((out - (-2f64).exp()).abs() < 1e-15);
        let mut u = 0.0;
        assert_eq!(fm_calibrate_level(c("orderstat(3,1)").as_ptr(), 1024.0, 1.0, &mut u), FmStatus::Ok);
        assert_eq!(fm_tail(c("orderstat(3,1)").as_ptr(), u, &mut out), FmStatus::Ok);
        assert!((1024.0 * out - 1.0).abs() < 1e-10);
        assert_eq!(fm_exact_iid_joint(c("point(0)").as_ptr(), 0.9, 0.1, 2, &mut out), FmStatus::Ok);
        assert!((out - 0.81).abs() < 1e-15);
        assert_eq!(fm_tail(c("student(3)").as_ptr(), 1.0, &mut out), FmStatus::InvalidArgument);
        assert!(!CStr::from_ptr(fm_version()).to_str().unwrap().is_empty());
    }
}

#[test]
fn run_experiment_returns_json() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = c(dir.path().to_str().unwrap());
    unsafe {
        let mut json = ptr::null_mut();
        let cfg = c("lambda = beta(1,1)\ntau = 1\nkappa = 2\n");
        assert_eq!(fm_run_experiment(c("limit").as_ptr(), cfg.as_ptr(), out_dir.as_ptr(), &mut json), FmStatus::Ok);
        let s = CStr::from_ptr(json).to_str().unwrap().to_string();
        fm_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["experiment"], "limit");
        assert!(dir.path().join("results.csv").exists());

        let bad = c("shape = 8\ntau = 1\nkappa = 1\nbogus = 2\n");
        let mut json = ptr::null_mut();
        assert_eq!(fm_run_experiment(c("calibrate").as_ptr(), bad.as_ptr(), ptr::null(), &mut json), FmStatus::ParseError);
        assert!(json.is_null());
        assert!(last_error().contains("bogus"));
    }
}

#[test]
fn header_compiles_as_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fieldmax.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["fm_model_new", "fm_sampler_sample", "fm_run_experiment", "fm_string_free", "FM_STATUS_PANIC"] {
        assert!(text.contains(name), "{name}");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler, skipping syntax check");
        return;
    };
    assert!(status.success());
}

#[test]
fn c_program_links_and_runs() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| root.join("../../target"));
    let lib = target.join("debug/libfieldmax_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let Ok(status) = std::process::Command::new("cc")
        .arg(root.join("tests/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(status.success());
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{:?}", out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("dense InvalidParameter"), "{text}");
}
