//! C interface to the mrbc simulator.
//!
//! Scenarios and runs are opaque handles owned by the caller and released
//! with the matching `_free` function. Every fallible call returns an
//! [`MrbcStatus`]; on failure the message is available from
//! [`mrbc_last_error`] on the same thread until the next failing call.

#![allow(clippy::missing_safety_doc, clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mrbc::analysis::analyze_scenario;
use mrbc::hacblf::{envelope, saturate, EnvelopeParams};
use mrbc::scenario::{self, load_config, ScenarioConfig, MAX_SEED, SEED_ENV};
use mrbc::simulation::{RunOutcome, Verdict};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrbcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    NotFound = 5,
    Analysis = 6,
    BufferTooSmall = 7,
    InvalidArgument = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrbcVerdictKind {
    Completed = 0,
    EnvelopeViolation = 2,
    NumericFailure = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrbcVerdict {
    pub kind: MrbcVerdictKind,
    /// 1-based; 0 unless `kind` is an envelope violation.
    pub subsystem: usize,
    /// Failure time; the final time for a completed run.
    pub t: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MrbcSaturation {
    pub applied: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub delta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MrbcReport {
    pub samples: usize,
    pub rho_ob: f64,
    pub ell_ob: f64,
    pub rho_cont: f64,
    pub ell_cont: f64,
    pub rho_all: f64,
    pub ell_all: f64,
    pub bound_ob_ok: f64,
    pub bound_cont_ok: f64,
    pub bound_all_ok: f64,
    pub rate_ob_ok: f64,
    pub rate_cont_ok: f64,
    pub rate_all_ok: f64,
    pub fitted_decay: f64,
    pub fitted_decay_bar: f64,
    pub radius_ob: f64,
    pub radius_cont: f64,
    pub radius_all: f64,
    pub connector_residual: f64,
    pub connector_bar_residual: f64,
    pub sup_delta_u: f64,
    pub saturated_samples: usize,
    pub violations: usize,
}

/// Opaque scenario handle.
pub struct MrbcScenario {
    cfg: ScenarioConfig,
}

/// Opaque run handle: trace plus verdict.
pub struct MrbcRun {
    outcome: RunOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MrbcStatus, msg: impl Into<String>) -> MrbcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> MrbcStatus) -> MrbcStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(MrbcStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MrbcStatus> {
    if p.is_null() {
        return Err(fail(MrbcStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(MrbcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr, $what:literal) => {
        if $p.is_null() {
            return fail(MrbcStatus::NullArgument, concat!($what, " is null"));
        }
    };
}

unsafe fn emit_scenario(cfg: Result<ScenarioConfig, (MrbcStatus, String)>, out: *mut *mut MrbcScenario) -> MrbcStatus {
    match cfg {
        Ok(cfg) => match cfg.with_env_seed() {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(MrbcScenario { cfg }));
                MrbcStatus::Ok
            }
            Err(e) => {
                *out = ptr::null_mut();
                fail(MrbcStatus::Config, format!("{SEED_ENV}: {e}"))
            }
        },
        Err((s, msg)) => {
            *out = ptr::null_mut();
            fail(s, msg)
        }
    }
}

fn parse(text: &str) -> Result<ScenarioConfig, (MrbcStatus, String)> {
    load_config(text)
        .map_err(|errs| (MrbcStatus::Config, errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mrbc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mrbc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a scenario from TOML text.
#[no_mangle]
pub unsafe extern "C" fn mrbc_scenario_from_str(toml: *const c_char, out: *mut *mut MrbcScenario) -> MrbcStatus {
    guard(|| {
        non_null!(out, "out");
        let text = try_status!(str_arg(toml, "toml"));
        emit_scenario(parse(text), out)
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrbc_scenario_from_file(path: *const c_char, out: *mut *mut MrbcScenario) -> MrbcStatus {
    guard(|| {
        non_null!(out, "out");
        let path = try_status!(str_arg(path, "path"));
        let cfg = std::fs::read_to_string(path)
            .map_err(|e| (MrbcStatus::Io, format!("{path}: {e}")))
            .and_then(|t| parse(&t));
        emit_scenario(cfg, out)
    })
}

/// One of the scenarios shipped with the library, by name.
#[no_mangle]
pub unsafe extern "C" fn mrbc_scenario_bundled(name: *const c_char, out: *mut *mut MrbcScenario) -> MrbcStatus {
    guard(|| {
        non_null!(out, "out");
        let name = try_status!(str_arg(name, "name"));
        emit_scenario(scenario::bundled(name).ok_or((MrbcStatus::NotFound, format!("no bundled scenario {name}"))), out)
    })
}

/// Seeds above `INT64_MAX` are rejected with `MRBC_STATUS_INVALID_ARGUMENT`.
#[no_mangle]
pub unsafe extern "C" fn mrbc_scenario_set_seed(s: *mut MrbcScenario, seed: u64) -> MrbcStatus {
    guard(|| {
        non_null!(s, "scenario");
        if seed > MAX_SEED {
            return fail(MrbcStatus::InvalidArgument, format!("seed {seed} exceeds {MAX_SEED}"));
        }
        (*s).cfg.seed = seed;
        MrbcStatus::Ok
    })
}

/// System order, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mrbc_scenario_order(s: *const MrbcScenario) -> usize {
    s.as_ref().map_or(0, |s| s.cfg.order())
}

#[no_mangle]
pub unsafe extern "C" fn mrbc_scenario_free(s: *mut MrbcScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Simulates the scenario. Returns `Ok` whenever a trace was produced,
/// including runs that stop on a violation; inspect the verdict.
#[no_mangle]
pub unsafe extern "C" fn mrbc_run(s: *const MrbcScenario, out: *mut *mut MrbcRun) -> MrbcStatus {
    guard(|| {
        non_null!(s, "scenario");
        non_null!(out, "out");
        *out = ptr::null_mut();
        match scenario::run(&(*s).cfg) {
            Ok(outcome) => {
                *out = Box::into_raw(Box::new(MrbcRun { outcome }));
                MrbcStatus::Ok
            }
            Err(errs) => fail(MrbcStatus::Config, errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrbc_run_verdict(r: *const MrbcRun, out: *mut MrbcVerdict) -> MrbcStatus {
    guard(|| {
        non_null!(r, "run");
        non_null!(out, "out");
        let last_t = (*r).outcome.trace.records.last().map_or(0.0, |x| x.t);
        *out = match (*r).outcome.verdict {
            Verdict::Completed => MrbcVerdict { kind: MrbcVerdictKind::Completed, subsystem: 0, t: last_t },
            Verdict::EnvelopeViolation { subsystem, t } => {
                MrbcVerdict { kind: MrbcVerdictKind::EnvelopeViolation, subsystem, t }
            }
            Verdict::NumericFailure { t } => MrbcVerdict { kind: MrbcVerdictKind::NumericFailure, subsystem: 0, t },
        };
        MrbcStatus::Ok
    })
}

/// Number of recorded samples, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mrbc_run_len(r: *const MrbcRun) -> usize {
    r.as_ref().map_or(0, |r| r.outcome.trace.len())
}

/// Copies one trace column (CSV header name, e.g. `ebar1`) into `buf`.
/// `written` receives the column length; when `cap` is too small nothing is
/// copied and `BufferTooSmall` is returned.
#[no_mangle]
pub unsafe extern "C" fn mrbc_run_column(
    r: *const MrbcRun,
    name: *const c_char,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> MrbcStatus {
    guard(|| {
        non_null!(r, "run");
        non_null!(written, "written");
        let name = try_status!(str_arg(name, "name"));
        let Some(col) = (*r).outcome.trace.column(name) else {
            return fail(MrbcStatus::NotFound, format!("no column {name}"));
        };
        *written = col.len();
        if col.len() > cap {
            return fail(MrbcStatus::BufferTooSmall, format!("column has {} values, buffer holds {cap}", col.len()));
        }
        if !col.is_empty() {
            non_null!(buf, "buf");
            ptr::copy_nonoverlapping(col.as_ptr(), buf, col.len());
        }
        MrbcStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrbc_run_write_csv(r: *const MrbcRun, path: *const c_char) -> MrbcStatus {
    guard(|| {
        non_null!(r, "run");
        let path = try_status!(str_arg(path, "path"));
        match (*r).outcome.trace.save(path) {
            Ok(()) => MrbcStatus::Ok,
            Err(e) => fail(MrbcStatus::Io, format!("{path}: {e}")),
        }
    })
}

/// Stability monitors over a run, using the scenario's gains.
#[no_mangle]
pub unsafe extern "C" fn mrbc_run_analyze(
    r: *const MrbcRun,
    s: *const MrbcScenario,
    out: *mut MrbcReport,
) -> MrbcStatus {
    guard(|| {
        non_null!(r, "run");
        non_null!(s, "scenario");
        non_null!(out, "out");
        let rep = match analyze_scenario(&(*r).outcome.trace, &(*s).cfg) {
            Ok(rep) => rep,
            Err(e) => return fail(MrbcStatus::Analysis, e.to_string()),
        };
        *out = MrbcReport {
            samples: rep.samples,
            rho_ob: rep.rho_ob,
            ell_ob: rep.ell_ob,
            rho_cont: rep.rho_cont,
            ell_cont: rep.ell_cont,
            rho_all: rep.rho_all,
            ell_all: rep.ell_all,
            bound_ob_ok: rep.bound_ob_ok,
            bound_cont_ok: rep.bound_cont_ok,
            bound_all_ok: rep.bound_all_ok,
            rate_ob_ok: rep.rate_ob_ok,
            rate_cont_ok: rep.rate_cont_ok,
            rate_all_ok: rep.rate_all_ok,
            fitted_decay: rep.fitted_decay,
            fitted_decay_bar: rep.fitted_decay_bar,
            radius_ob: rep.radius_ob,
            radius_cont: rep.radius_cont,
            radius_all: rep.radius_all,
            connector_residual: rep.connector_residual,
            connector_bar_residual: rep.connector_bar_residual,
            sup_delta_u: rep.sup_delta_u,
            saturated_samples: rep.saturated_samples,
            violations: rep.violations.len(),
        };
        MrbcStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn mrbc_run_free(r: *mut MrbcRun) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Amplitude saturation `α(u) = α1 u + α2` with limits `[u_min, u_max]`.
#[no_mangle]
pub unsafe extern "C" fn mrbc_saturate(u: f64, u_min: f64, u_max: f64, out: *mut MrbcSaturation) -> MrbcStatus {
    guard(|| {
        non_null!(out, "out");
        if !(u_min < u_max) || !u.is_finite() {
            return fail(MrbcStatus::InvalidArgument, format!("need finite u and u_min < u_max, got {u}, [{u_min}, {u_max}]"));
        }
        let s = saturate(u, u_min, u_max);
        *out = MrbcSaturation { applied: s.applied, alpha1: s.alpha1, alpha2: s.alpha2, delta: s.delta };
        MrbcStatus::Ok
    })
}

/// Envelope `o(t) = (o_shoot - o_bound) e^{-o_rate t} + o_bound`.
#[no_mangle]
pub extern "C" fn mrbc_envelope(t: f64, o_shoot: f64, o_bound: f64, o_rate: f64) -> f64 {
    envelope(t, &EnvelopeParams::new(o_shoot, o_bound, o_rate))
}
