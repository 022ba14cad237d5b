//! C interface to `mdp-accel`.
//!
//! Models and reports are opaque heap handles owned by the caller and
//! released with [`mdpa_model_free`] / [`mdpa_report_free`]. Every fallible
//! call returns an [`MdpaStatus`]; on failure the message is available from
//! [`mdpa_last_error_message`] on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mdp_accel::model::load_model;
use mdp_accel::{
    generate, solver, AcceleratorKind, Error, GeneratorSpec, IterationReport, MdpModel,
    OperatorKind, SolverConfig,
};

/// Opaque model handle.
pub struct MdpaModel(MdpModel);

/// Opaque solve report handle.
pub struct MdpaReport(IterationReport);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MdpaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    InvalidArgument = 6,
    InvalidCombination = 7,
    NotFeasible = 8,
    BufferTooSmall = 9,
    /// A Rust panic was caught at the boundary.
    Internal = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MdpaOperator {
    Standard = 0,
    Jacobi = 1,
    GaussSeidel = 2,
    GaussSeidelJacobi = 3,
    TotalReward = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MdpaAccelerator {
    None = 0,
    Projective = 1,
    LinearExtension = 2,
}

/// Solver settings. `op` takes an `MdpaOperator` value and `accel` an
/// `MdpaAccelerator` value.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MdpaSolveOptions {
    pub op: u32,
    pub accel: u32,
    pub epsilon: f64,
    pub beta: f64,
    pub max_iterations: usize,
    pub membership_checks: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: MdpaStatus, msg: impl Into<String>) -> MdpaStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> MdpaStatus {
    match e {
        Error::Io { .. } => MdpaStatus::Io,
        Error::Parse(_) => MdpaStatus::Parse,
        Error::Validation(_) => MdpaStatus::Validation,
        Error::InvalidCombination { .. } | Error::ModeMismatch { .. } => {
            MdpaStatus::InvalidCombination
        }
        Error::NotFeasible { .. } => MdpaStatus::NotFeasible,
        _ => MdpaStatus::InvalidArgument,
    }
}

/// Run `f` behind a panic guard, mapping errors to status codes.
fn guard(f: impl FnOnce() -> Result<(), (MdpaStatus, String)>) -> MdpaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MdpaStatus::Ok,
        Ok(Err((status, msg))) => fail(status, msg),
        Err(_) => fail(MdpaStatus::Internal, "panic inside mdp-accel"),
    }
}

fn lib_err(e: Error) -> (MdpaStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (MdpaStatus, String)> {
    if s.is_null() {
        return Err((MdpaStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (MdpaStatus::InvalidUtf8, e.to_string()))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (MdpaStatus, String)> {
    if out.is_null() {
        return Err((MdpaStatus::NullPointer, "null output pointer".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mdpa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn mdpa_status_name(status: MdpaStatus) -> *const c_char {
    let s: &'static CStr = match status {
        MdpaStatus::Ok => c"ok",
        MdpaStatus::NullPointer => c"null_pointer",
        MdpaStatus::InvalidUtf8 => c"invalid_utf8",
        MdpaStatus::Io => c"io",
        MdpaStatus::Parse => c"parse",
        MdpaStatus::Validation => c"validation",
        MdpaStatus::InvalidArgument => c"invalid_argument",
        MdpaStatus::InvalidCombination => c"invalid_combination",
        MdpaStatus::NotFeasible => c"not_feasible",
        MdpaStatus::BufferTooSmall => c"buffer_too_small",
        MdpaStatus::Internal => c"internal",
    };
    s.as_ptr()
}

/// Standard backup, no accelerator, epsilon 1e-3, checks on.
#[no_mangle]
pub extern "C" fn mdpa_solve_options_default() -> MdpaSolveOptions {
    MdpaSolveOptions {
        op: MdpaOperator::Standard as u32,
        accel: MdpaAccelerator::None as u32,
        epsilon: solver::DEFAULT_EPSILON,
        beta: 0.0,
        max_iterations: solver::DEFAULT_MAX_ITERATIONS,
        membership_checks: true,
    }
}

/// Parse and validate a model from a NUL-terminated JSON string.
#[no_mangle]
pub unsafe extern "C" fn mdpa_model_from_json(
    json: *const c_char,
    out: *mut *mut MdpaModel,
) -> MdpaStatus {
    guard(|| {
        let text = read_str(json)?;
        let m = MdpModel::from_json(text).map_err(lib_err)?;
        put(out, MdpaModel(m))
    })
}

#[no_mangle]
pub unsafe extern "C" fn mdpa_model_load(
    path: *const c_char,
    out: *mut *mut MdpaModel,
) -> MdpaStatus {
    guard(|| {
        let p = read_str(path)?;
        let m = load_model(p).map_err(lib_err)?;
        put(out, MdpaModel(m))
    })
}

fn generated(spec: GeneratorSpec) -> Result<MdpaModel, (MdpaStatus, String)> {
    generate(&spec).map(MdpaModel).map_err(lib_err)
}

/// Random model with nonzeros spread uniformly over each row.
#[no_mangle]
pub unsafe extern "C" fn mdpa_model_generate_uniform(
    states: usize,
    density: f64,
    discount: f64,
    seed: u64,
    out: *mut *mut MdpaModel,
) -> MdpaStatus {
    guard(|| put(out, generated(GeneratorSpec::uniform(states, density, discount, seed))?))
}

/// Random model with nonzeros in a band around the diagonal.
#[no_mangle]
pub unsafe extern "C" fn mdpa_model_generate_band(
    states: usize,
    bandwidth: usize,
    discount: f64,
    seed: u64,
    out: *mut *mut MdpaModel,
) -> MdpaStatus {
    guard(|| put(out, generated(GeneratorSpec::band(states, bandwidth, discount, seed))?))
}

/// Random total-reward model whose last state is absorbing.
#[no_mangle]
pub unsafe extern "C" fn mdpa_model_generate_total_reward(
    states: usize,
    density: f64,
    seed: u64,
    out: *mut *mut MdpaModel,
) -> MdpaStatus {
    guard(|| put(out, generated(GeneratorSpec::total_reward(states, density, seed))?))
}

#[no_mangle]
pub unsafe extern "C" fn mdpa_model_free(model: *mut MdpaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of states, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn mdpa_model_num_states(model: *const MdpaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_states())
}

/// Discount factor (1 for total-reward models), NaN for NULL.
#[no_mangle]
pub unsafe extern "C" fn mdpa_model_discount(model: *const MdpaModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.discount())
}

fn operator(code: u32) -> Option<OperatorKind> {
    Some(match code {
        0 => OperatorKind::Standard,
        1 => OperatorKind::Jacobi,
        2 => OperatorKind::GaussSeidel,
        3 => OperatorKind::GaussSeidelJacobi,
        4 => OperatorKind::TotalReward,
        _ => return None,
    })
}

fn accelerator(code: u32) -> Option<AcceleratorKind> {
    Some(match code {
        0 => AcceleratorKind::None,
        1 => AcceleratorKind::Projective,
        2 => AcceleratorKind::LinearExtension,
        _ => return None,
    })
}

/// Solve from the automatic starting point. `options` may be NULL for the
/// defaults. A run that hits the iteration cap still succeeds; check
/// [`mdpa_report_converged`].
#[no_mangle]
pub unsafe extern "C" fn mdpa_solve(
    model: *const MdpaModel,
    options: *const MdpaSolveOptions,
    out: *mut *mut MdpaReport,
) -> MdpaStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or((MdpaStatus::NullPointer, "null model".to_string()))?;
        let o = options.as_ref().copied().unwrap_or_else(|| mdpa_solve_options_default());
        let op = operator(o.op)
            .ok_or((MdpaStatus::InvalidArgument, format!("unknown operator code {}", o.op)))?;
        let accel = accelerator(o.accel).ok_or((
            MdpaStatus::InvalidArgument,
            format!("unknown accelerator code {}", o.accel),
        ))?;
        let cfg = SolverConfig::new(op, accel)
            .epsilon(o.epsilon)
            .beta(o.beta)
            .max_iterations(o.max_iterations)
            .membership_checks(o.membership_checks);
        let rep = solver::run(&m.0, &cfg).map_err(lib_err)?;
        put(out, MdpaReport(rep))
    })
}

#[no_mangle]
pub unsafe extern "C" fn mdpa_report_free(report: *mut MdpaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mdpa_report_iterations(report: *const MdpaReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.iterations)
}

#[no_mangle]
pub unsafe extern "C" fn mdpa_report_converged(report: *const MdpaReport) -> bool {
    report.as_ref().is_some_and(|r| r.0.converged)
}

#[no_mangle]
pub unsafe extern "C" fn mdpa_report_wall_ms(report: *const MdpaReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.wall_ms())
}

#[no_mangle]
pub unsafe extern "C" fn mdpa_report_fallbacks(report: *const MdpaReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.fallback_count)
}

/// Residual of the last iteration.
#[no_mangle]
pub unsafe extern "C" fn mdpa_report_final_residual(report: *const MdpaReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.final_residual())
}

/// Length of the value and policy arrays.
#[no_mangle]
pub unsafe extern "C" fn mdpa_report_num_states(report: *const MdpaReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.final_value.len())
}

/// Copy the final value into `buf`, which must hold
/// [`mdpa_report_num_states`] doubles.
#[no_mangle]
pub unsafe extern "C" fn mdpa_report_value(
    report: *const MdpaReport,
    buf: *mut f64,
    len: usize,
) -> MdpaStatus {
    guard(|| copy_out(report, buf, len, |r| r.final_value.to_vec()))
}

/// Copy the final policy (action index per state) into `buf`.
#[no_mangle]
pub unsafe extern "C" fn mdpa_report_policy(
    report: *const MdpaReport,
    buf: *mut usize,
    len: usize,
) -> MdpaStatus {
    guard(|| copy_out(report, buf, len, |r| r.final_policy.to_vec()))
}

unsafe fn copy_out<T: Copy>(
    report: *const MdpaReport,
    buf: *mut T,
    len: usize,
    get: impl FnOnce(&IterationReport) -> Vec<T>,
) -> Result<(), (MdpaStatus, String)> {
    let r = report
        .as_ref()
        .ok_or((MdpaStatus::NullPointer, "null report".to_string()))?;
    if buf.is_null() {
        return Err((MdpaStatus::NullPointer, "null buffer".into()));
    }
    let data = get(&r.0);
    if len < data.len() {
        return Err((
            MdpaStatus::BufferTooSmall,
            format!("buffer holds {len}, need {}", data.len()),
        ));
    }
    ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    Ok(())
}
