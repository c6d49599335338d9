//! C ABI over the imaging toolkit: opaque handles, integer status codes and
//! a thread-local last-error message. The header is generated into
//! `include/sarvel.h` at build time.
//!
//! Conventions:
//! - Every fallible call returns a [`SarvelStatus`]; `SARVEL_STATUS_OK` is 0.
//! - On failure, `sarvel_last_error_message` describes the most recent error
//!   on the calling thread; the pointer stays valid until the next failing
//!   call on that thread.
//! - Handles are created and destroyed exclusively through this API. Strings
//!   returned through `char**` out-parameters are freed with
//!   `sarvel_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;


use sarvel::analysis::resolution_bounds;
use sarvel::config::{load_preset, ExperimentConfig};
use sarvel::experiment::{run_experiment, validation_report, Execution};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SarvelStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration failed to parse or validate.
    Config = 3,
    /// The sparse solver hit its iteration budget; outputs were still
    /// written and the result handle is valid.
    SolverNonConvergence = 4,
    /// A file could not be read or written.
    Io = 5,
    /// A precondition of the underlying API was violated.
    Contract = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &sarvel::Error) -> SarvelStatus {
    match err {
        sarvel::Error::Io { .. } => SarvelStatus::Io,
        sarvel::Error::Contract(_) => SarvelStatus::Contract,
        _ => SarvelStatus::Config,
    }
}

fn guard<F: FnOnce() -> SarvelStatus>(f: F) -> SarvelStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic caught at the FFI boundary");
            SarvelStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, SarvelStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(SarvelStatus::NullArgument);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SarvelStatus::InvalidUtf8
    })
}

/// Opaque experiment configuration handle.
pub struct SarvelConfig {
    inner: ExperimentConfig,
}

/// Opaque result handle of one experiment run.
pub struct SarvelRunResult {
    execution: Execution,
}

/// Version string of the library; statically allocated, do not free.
#[no_mangle]
pub extern "C" fn sarvel_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Most recent error message on the calling thread. Valid until the next
/// failing call on this thread; do not free.
#[no_mangle]
pub extern "C" fn sarvel_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Free a string returned through a `char**` out-parameter.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sarvel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load an experiment configuration from a TOML file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sarvel_config_from_file(
    path: *const c_char,
    out: *mut *mut SarvelConfig,
) -> SarvelStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out-parameter");
            return SarvelStatus::NullArgument;
        }
        let path = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ExperimentConfig::from_path(Path::new(path)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(SarvelConfig { inner: cfg }));
                SarvelStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Load one of the shipped preset configurations by name.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sarvel_config_from_preset(
    name: *const c_char,
    out: *mut *mut SarvelConfig,
) -> SarvelStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out-parameter");
            return SarvelStatus::NullArgument;
        }
        let name = match read_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match load_preset(name) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(SarvelConfig { inner: cfg }));
                SarvelStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Replace all config seeds from a single master seed.
///
/// # Safety
/// `cfg` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sarvel_config_set_seed(
    cfg: *mut SarvelConfig,
    seed: u64,
) -> SarvelStatus {
    guard(|| {
        if cfg.is_null() {
            set_error("null config handle");
            return SarvelStatus::NullArgument;
        }
        (*cfg).inner.override_seed(seed);
        SarvelStatus::Ok
    })
}

/// Validate a configuration. Returns OK when valid; CONFIG when issues were
/// found. When `report_out` is non-null it receives the full human-readable
/// report (free with `sarvel_string_free`).
///
/// # Safety
/// `cfg` must be a live handle; `report_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn sarvel_config_validate(
    cfg: *const SarvelConfig,
    report_out: *mut *mut c_char,
) -> SarvelStatus {
    guard(|| {
        if cfg.is_null() {
            set_error("null config handle");
            return SarvelStatus::NullArgument;
        }
        match validation_report(&(*cfg).inner) {
            Ok(report) => {
                let ok = !report.contains("error:");
                if !report_out.is_null() {
                    let c = CString::new(report.replace('\0', " ")).unwrap_or_default();
                    *report_out = c.into_raw();
                }
                if ok {
                    SarvelStatus::Ok
                } else {
                    set_error("configuration is invalid; see the validation report");
                    SarvelStatus::Config
                }
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Destroy a config handle.
///
/// # Safety
/// `cfg` must be null or a live handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sarvel_config_free(cfg: *mut SarvelConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run the configured experiment and write its output file set into
/// `out_dir`. On success (or solver non-convergence, which still writes
/// outputs) `result_out` receives a result handle.
///
/// # Safety
/// `cfg` must be a live handle; `out_dir` a valid NUL-terminated string;
/// `result_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sarvel_run(
    cfg: *const SarvelConfig,
    out_dir: *const c_char,
    result_out: *mut *mut SarvelRunResult,
) -> SarvelStatus {
    guard(|| {
        if cfg.is_null() || result_out.is_null() {
            set_error("null argument");
            return SarvelStatus::NullArgument;
        }
        let dir = match read_str(out_dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match run_experiment(&(*cfg).inner, Path::new(dir)) {
            Ok(summary) => {
                let converged = summary.solver_converged;
                *result_out = Box::into_raw(Box::new(SarvelRunResult {
                    execution: summary.execution,
                }));
                if converged {
                    SarvelStatus::Ok
                } else {
                    set_error("solver did not converge; outputs were still written");
                    SarvelStatus::SolverNonConvergence
                }
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

fn method_of<'a>(
    result: &'a SarvelRunResult,
    method: &str,
) -> Option<&'a sarvel::experiment::MethodResult> {
    match method {
        "ocd" => result.execution.ocd.as_ref(),
        "mf" => result.execution.baseline.as_ref(),
        _ => None,
    }
}

/// Per-pixel reflectivity magnitude error of a method ("ocd" or "mf").
///
/// # Safety
/// `result` must be a live handle; `method` a valid string; `out` non-null.
#[no_mangle]
pub unsafe extern "C" fn sarvel_result_pixel_error(
    result: *const SarvelRunResult,
    method: *const c_char,
    out: *mut c_double,
) -> SarvelStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            set_error("null argument");
            return SarvelStatus::NullArgument;
        }
        let name = match read_str(method) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match method_of(&*result, name) {
            Some(m) => {
                *out = m.metrics.pixel_error;
                SarvelStatus::Ok
            }
            None => {
                set_error("unknown or disabled method; expected \"ocd\" or \"mf\"");
                SarvelStatus::Contract
            }
        }
    })
}

/// Detection precision and recall of a method at the configured threshold.
///
/// # Safety
/// Same contract as [`sarvel_result_pixel_error`]; either out-pointer may be
/// null to skip it.
#[no_mangle]
pub unsafe extern "C" fn sarvel_result_detection(
    result: *const SarvelRunResult,
    method: *const c_char,
    precision_out: *mut c_double,
    recall_out: *mut c_double,
) -> SarvelStatus {
    guard(|| {
        if result.is_null() {
            set_error("null result handle");
            return SarvelStatus::NullArgument;
        }
        let name = match read_str(method) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match method_of(&*result, name) {
            Some(m) => {
                if !precision_out.is_null() {
                    *precision_out = m.metrics.detection.precision;
                }
                if !recall_out.is_null() {
                    *recall_out = m.metrics.detection.recall;
                }
                SarvelStatus::Ok
            }
            None => {
                set_error("unknown or disabled method; expected \"ocd\" or \"mf\"");
                SarvelStatus::Contract
            }
        }
    })
}

/// Destroy a result handle.
///
/// # Safety
/// `result` must be null or a live handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sarvel_run_result_free(result: *mut SarvelRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Range/cross-range resolution lower bounds of a forward-cone configuration.
///
/// # Safety
/// `rho_x_out` and `rho_y_out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sarvel_resolution_bounds(
    f0_hz: c_double,
    bandwidth_hz: c_double,
    cone_width_rad: c_double,
    rho_x_out: *mut c_double,
    rho_y_out: *mut c_double,
) -> SarvelStatus {
    guard(|| {
        if rho_x_out.is_null() || rho_y_out.is_null() {
            set_error("null out-parameter");
            return SarvelStatus::NullArgument;
        }
        match resolution_bounds(f0_hz, bandwidth_hz, cone_width_rad, sarvel::SPEED_OF_LIGHT) {
            Ok((rx, ry)) => {
                *rho_x_out = rx;
                *rho_y_out = ry;
                SarvelStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                SarvelStatus::Contract
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated() {
        let v = sarvel_version();
        assert!(!v.is_null());
        let s = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
        assert!(!s.is_empty());
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            let mut out: *mut SarvelConfig = std::ptr::null_mut();
            assert_eq!(
                sarvel_config_from_preset(std::ptr::null(), &mut out),
                SarvelStatus::NullArgument
            );
            assert_eq!(
                sarvel_config_from_file(std::ptr::null(), &mut out),
                SarvelStatus::NullArgument
            );
            let msg = CStr::from_ptr(sarvel_last_error_message());
            assert!(!msg.to_bytes().is_empty());
        }
    }

    #[test]
    fn resolution_bounds_through_the_abi() {
        let mut rx = 0.0;
        let mut ry = 0.0;
        let status = unsafe {
            sarvel_resolution_bounds(1.5e9, 50e6, 45f64.to_radians(), &mut rx, &mut ry)
        };
        assert_eq!(status, SarvelStatus::Ok);
        assert!((rx - 0.9237).abs() < 5e-4);
        assert!((ry - 0.12843).abs() < 5e-5);
        // invalid cone width
        let status =
            unsafe { sarvel_resolution_bounds(1.5e9, 0.0, 3.0, &mut rx, &mut ry) };
        assert_eq!(status, SarvelStatus::Contract);
    }
}
