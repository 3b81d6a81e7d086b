//! C ABI over `semalloc`.
//!
//! Every fallible function returns a [`SemallocStatus`] and writes results
//! through out-pointers. On failure a message is kept per thread and can be
//! read with [`semalloc_last_error`]. Handles are opaque and owned by the
//! caller, who releases them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use semalloc::baselines::{run_methods, Method};
use semalloc::harness::{RunConfig, Toolkit};
use semalloc::netmodel::{generate_scenario, Scenario};
use semalloc::solution::{audit_constraints, Solution};
use semalloc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemallocStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Bad configuration, JSON or method name.
    InvalidInput = 3,
    /// Schema version mismatch in a JSON document.
    Schema = 4,
    /// The solution violates at least one constraint.
    Audit = 5,
    /// Solver or matching failure.
    Failure = 6,
    Panic = 7,
}

/// Run configuration with its fidelity models and solvers.
pub struct SemallocContext {
    config: RunConfig,
    toolkit: Toolkit,
}

pub struct SemallocScenario(Scenario);

pub struct SemallocSolution(Solution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SemallocStatus {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Toml(_) | Error::Table(_) => SemallocStatus::InvalidInput,
        Error::Schema { .. } => SemallocStatus::Schema,
        Error::Audit(_) => SemallocStatus::Audit,
        _ => SemallocStatus::Failure,
    }
}

fn guard<F: FnOnce() -> Result<(), SemallocStatus>>(f: F) -> SemallocStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SemallocStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside semalloc".into());
            SemallocStatus::Panic
        }
    }
}

fn check<T>(r: semalloc::Result<T>) -> Result<T, SemallocStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, SemallocStatus> {
    if p.is_null() {
        set_error("null string argument".into());
        return Err(SemallocStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not UTF-8".into());
        SemallocStatus::InvalidUtf8
    })
}

unsafe fn ref_arg<'a, T>(p: *const T) -> Result<&'a T, SemallocStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle".into());
        SemallocStatus::NullArgument
    })
}

fn out_arg<T>(p: *mut T) -> Result<(), SemallocStatus> {
    if p.is_null() {
        set_error("null output pointer".into());
        return Err(SemallocStatus::NullArgument);
    }
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn semalloc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn semalloc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a context from a JSON run configuration; null selects the
/// defaults.
///
/// # Safety
/// `config_json` is null or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_context_new(config_json: *const c_char, out: *mut *mut SemallocContext) -> SemallocStatus {
    guard(|| {
        out_arg(out)?;
        let config = if config_json.is_null() {
            RunConfig::default()
        } else {
            check(serde_json::from_str::<RunConfig>(str_arg(config_json)?).map_err(Error::from))?
        };
        check(config.validate())?;
        let toolkit = check(Toolkit::build(&config))?;
        *out = Box::into_raw(Box::new(SemallocContext { config, toolkit }));
        Ok(())
    })
}

/// # Safety
/// `ctx` is null or was returned by [`semalloc_context_new`] and not freed.
#[no_mangle]
pub unsafe extern "C" fn semalloc_context_free(ctx: *mut SemallocContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Draws a scenario from the context's configuration.
///
/// # Safety
/// `ctx` is a live context; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_scenario_generate(
    ctx: *const SemallocContext,
    seed: u64,
    out: *mut *mut SemallocScenario,
) -> SemallocStatus {
    guard(|| {
        let ctx = ref_arg(ctx)?;
        out_arg(out)?;
        let sc = check(generate_scenario(&ctx.config.scenario, seed))?;
        *out = Box::into_raw(Box::new(SemallocScenario(sc)));
        Ok(())
    })
}

/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_scenario_from_json(json: *const c_char, out: *mut *mut SemallocScenario) -> SemallocStatus {
    guard(|| {
        out_arg(out)?;
        let sc = check(Scenario::from_json(str_arg(json)?))?;
        *out = Box::into_raw(Box::new(SemallocScenario(sc)));
        Ok(())
    })
}

/// Serialises a scenario; release the string with [`semalloc_string_free`].
///
/// # Safety
/// `scenario` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_scenario_to_json(scenario: *const SemallocScenario, out: *mut *mut c_char) -> SemallocStatus {
    guard(|| {
        let sc = ref_arg(scenario)?;
        out_arg(out)?;
        *out = into_c_string(check(sc.0.to_json())?);
        Ok(())
    })
}

/// Number of users in the scenario, 0 for a null handle.
///
/// # Safety
/// `scenario` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semalloc_scenario_user_count(scenario: *const SemallocScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.users.len())
}

/// # Safety
/// `scenario` is null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semalloc_scenario_free(scenario: *mut SemallocScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs one method (`proposed`, `random`, `sum_sr_max`, `conventional_k<k>`,
/// `conventional_opt_k`, `no_coop`) and audits the result.
///
/// # Safety
/// `ctx` and `scenario` are live handles; `method` is a NUL-terminated
/// string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_solve(
    ctx: *const SemallocContext,
    scenario: *const SemallocScenario,
    method: *const c_char,
    seed: u64,
    out: *mut *mut SemallocSolution,
) -> SemallocStatus {
    guard(|| {
        let ctx = ref_arg(ctx)?;
        let sc = ref_arg(scenario)?;
        out_arg(out)?;
        let method: Method = check(str_arg(method)?.parse())?;
        if method == Method::UpperBound {
            set_error("upper_bound has no solution".into());
            return Err(SemallocStatus::InvalidInput);
        }
        let mut runs = check(run_methods(
            &[method],
            &sc.0,
            ctx.toolkit.solvers(),
            ctx.config.matching,
            Default::default(),
            seed,
        ))?;
        let sol = runs.pop().and_then(|r| r.solution).ok_or(SemallocStatus::Failure)?;
        *out = Box::into_raw(Box::new(SemallocSolution(sol)));
        Ok(())
    })
}

/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_solution_from_json(json: *const c_char, out: *mut *mut SemallocSolution) -> SemallocStatus {
    guard(|| {
        out_arg(out)?;
        let sol = check(Solution::from_json(str_arg(json)?))?;
        *out = Box::into_raw(Box::new(SemallocSolution(sol)));
        Ok(())
    })
}

/// # Safety
/// `solution` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_solution_to_json(solution: *const SemallocSolution, out: *mut *mut c_char) -> SemallocStatus {
    guard(|| {
        let sol = ref_arg(solution)?;
        out_arg(out)?;
        *out = into_c_string(check(sol.0.to_json())?);
        Ok(())
    })
}

/// # Safety
/// `solution` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_solution_total_qoe(solution: *const SemallocSolution, out: *mut f64) -> SemallocStatus {
    guard(|| {
        let sol = ref_arg(solution)?;
        out_arg(out)?;
        *out = sol.0.total_qoe;
        Ok(())
    })
}

/// # Safety
/// `solution` is null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semalloc_solution_free(solution: *mut SemallocSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Checks every constraint. Writes the violation count to `violations`
/// (may be null) and returns `Audit` when it is nonzero.
///
/// # Safety
/// All handles are live; `violations` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn semalloc_audit(
    ctx: *const SemallocContext,
    scenario: *const SemallocScenario,
    solution: *const SemallocSolution,
    violations: *mut usize,
) -> SemallocStatus {
    guard(|| {
        let ctx = ref_arg(ctx)?;
        let sc = ref_arg(scenario)?;
        let sol = ref_arg(solution)?;
        let report = audit_constraints(&sc.0, &*ctx.toolkit.exact, &sol.0);
        if !violations.is_null() {
            *violations = report.violations.len();
        }
        if report.is_clean() {
            return Ok(());
        }
        let detail: Vec<String> = report.violations.iter().map(|v| format!("{}: {}", v.constraint, v.detail)).collect();
        set_error(detail.join("; "));
        Err(SemallocStatus::Audit)
    })
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semalloc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
