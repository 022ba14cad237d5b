use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mdp_accel_ffi::*;

const SWAP: &str = r#"{"mode":"discounted","discount":0.9,"states":[
  {"actions":[{"reward":1.0,"transitions":[[1,1.0]]}]},
  {"actions":[{"reward":1.0,"transitions":[[0,1.0]]}]}]}"#;

fn last_error() -> String {
    let p = mdpa_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(json: &str) -> (MdpaStatus, *mut MdpaModel) {
    let text = CString::new(json).unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { mdpa_model_from_json(text.as_ptr(), &mut model) };
    (status, model)
}

#[test]
fn solve_two_state_model() {
    let (status, model) = load(SWAP);
    assert_eq!(status, MdpaStatus::Ok);
    unsafe {
        assert_eq!(mdpa_model_num_states(model), 2);
        assert_eq!(mdpa_model_discount(model), 0.9);

        let mut opts = mdpa_solve_options_default();
        opts.accel = MdpaAccelerator::Projective as u32;
        opts.epsilon = 1e-9;
        let mut report = ptr::null_mut();
        assert_eq!(mdpa_solve(model, &opts, &mut report), MdpaStatus::Ok);
        assert!(mdpa_report_converged(report));
        assert!(mdpa_report_iterations(report) <= 2);
        assert_eq!(mdpa_report_num_states(report), 2);

        let mut value = [0.0; 2];
        assert_eq!(mdpa_report_value(report, value.as_mut_ptr(), 2), MdpaStatus::Ok);
        assert!((value[0] - 10.0).abs() < 1e-9 && (value[1] - 10.0).abs() < 1e-9);
        let mut policy = [9usize; 2];
        assert_eq!(mdpa_report_policy(report, policy.as_mut_ptr(), 2), MdpaStatus::Ok);
        assert_eq!(policy, [0, 0]);

        assert_eq!(
            mdpa_report_value(report, value.as_mut_ptr(), 1),
            MdpaStatus::BufferTooSmall
        );
        assert!(last_error().contains("need 2"));

        mdpa_report_free(report);
        mdpa_model_free(model);
    }
}

#[test]
fn defaults_when_options_are_null() {
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(
            mdpa_model_generate_uniform(30, 0.5, 0.9, 4, &mut model),
            MdpaStatus::Ok
        );
        let mut report = ptr::null_mut();
        assert_eq!(mdpa_solve(model, ptr::null(), &mut report), MdpaStatus::Ok);
        assert!(mdpa_report_converged(report));
        assert!(mdpa_report_final_residual(report) > 0.0);
        assert!(mdpa_report_wall_ms(report) >= 0.0);
        assert_eq!(mdpa_report_fallbacks(report), 0);
        mdpa_report_free(report);
        mdpa_model_free(model);
    }
}

#[test]
fn error_codes() {
    let (status, model) = load(r#"{"mode":"discounted","states":[]}"#);
    assert_eq!(status, MdpaStatus::Parse);
    assert!(model.is_null());
    assert!(last_error().contains("discount"));

    let half = SWAP.replace("[[1,1.0]]", "[[1,0.5]]");
    let (status, _) = load(&half);
    assert_eq!(status, MdpaStatus::Validation);
    assert!(last_error().contains("row-sum"));

    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(mdpa_model_load(ptr::null(), &mut out), MdpaStatus::NullPointer);
        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(mdpa_model_load(missing.as_ptr(), &mut out), MdpaStatus::Io);
        assert_eq!(
            mdpa_model_generate_band(10, 10, 0.9, 1, &mut out),
            MdpaStatus::InvalidArgument
        );
        assert_eq!(
            mdpa_solve(ptr::null(), ptr::null(), &mut ptr::null_mut()),
            MdpaStatus::NullPointer
        );
    }
}

#[test]
fn total_reward_rejects_jacobi() {
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(
            mdpa_model_generate_total_reward(5, 1.0, 2, &mut model),
            MdpaStatus::Ok
        );
        let mut opts = mdpa_solve_options_default();
        opts.op = MdpaOperator::Jacobi as u32;
        let mut report = ptr::null_mut();
        assert_eq!(
            mdpa_solve(model, &opts, &mut report),
            MdpaStatus::InvalidCombination
        );
        opts.op = MdpaOperator::TotalReward as u32;
        opts.accel = 7;
        assert_eq!(mdpa_solve(model, &opts, &mut report), MdpaStatus::InvalidArgument);
        opts.accel = MdpaAccelerator::Projective as u32;
        assert_eq!(mdpa_solve(model, &opts, &mut report), MdpaStatus::Ok);
        assert!(mdpa_report_converged(report));
        mdpa_report_free(report);
        mdpa_model_free(model);
    }
}

#[test]
fn status_names() {
    let name = |s| unsafe { CStr::from_ptr(mdpa_status_name(s)) }.to_str().unwrap().to_owned();
    assert_eq!(name(MdpaStatus::Ok), "ok");
    assert_eq!(name(MdpaStatus::BufferTooSmall), "buffer_too_small");
}

#[test]
fn free_accepts_null() {
    unsafe {
        mdpa_model_free(ptr::null_mut());
        mdpa_report_free(ptr::null_mut());
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mdp_accel.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["mdpa_solve", "mdpa_model_free", "MDPA_STATUS_OK", "typedef struct MdpaModel MdpaModel"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
