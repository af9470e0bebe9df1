//! C ABI for `ufm-core`.
//!
//! Every fallible function returns an `int32_t` status (`UFM_OK` on success)
//! and writes results through out-pointers. After a failure,
//! `ufm_last_error_message` describes it. Handles are opaque and must be
//! released with their matching `*_free` function; strings returned by the
//! library are released with `ufm_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ufm_core::cli::config::{resolve, ConfigFile, ResolvedConfig, WeightingFile, WeightingMode};
use ufm_core::cli::emit::emit_reports;
use ufm_core::dynamics::{learning_schedule, theory_factor};
use ufm_core::experiments::{run_experiment, ExperimentReport};
use ufm_core::reweight::{effective_weights, step_weights};
use ufm_core::sel::StepConfig;
use ufm_core::spectral::closed_form_factors;

pub const UFM_OK: i32 = 0;
/// Invalid configuration or argument.
pub const UFM_ERR_CONFIG: i32 = 2;
/// Divergence or another numerical failure.
pub const UFM_ERR_NUMERIC: i32 = 3;
pub const UFM_ERR_IO: i32 = 4;
pub const UFM_ERR_NULL: i32 = 10;
pub const UFM_ERR_UTF8: i32 = 11;
/// Caller buffer shorter than the result.
pub const UFM_ERR_BUFFER: i32 = 12;
pub const UFM_ERR_PANIC: i32 = 13;

/// Resolved experiment configuration.
pub struct UfmConfig {
    inner: ResolvedConfig,
}

/// Result of `ufm_run_experiment`.
pub struct UfmReport {
    config: ResolvedConfig,
    report: ExperimentReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    code: i32,
    message: String,
}

impl From<ufm_core::Error> for Failure {
    fn from(e: ufm_core::Error) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UFM_OK,
        Ok(Err(failure)) => {
            set_last_error(failure.message);
            failure.code
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            UFM_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(UFM_ERR_NULL, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(UFM_ERR_UTF8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(UFM_ERR_NULL, format!("{name} is null")))
}

fn check_out<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(UFM_ERR_NULL, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Copies `values` into a caller buffer of `len` doubles.
unsafe fn fill(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    check_out(out, "out")?;
    if len < values.len() {
        return Err(fail(
            UFM_ERR_BUFFER,
            format!("buffer holds {len} values but {} are needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

unsafe fn give_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    check_out(out, "out")?;
    let c = CString::new(s).map_err(|_| fail(UFM_ERR_UTF8, "string contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ufm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ufm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Config for `k` classes at imbalance ratio `ratio` with every other key at
/// its default. `reweighted` selects inverse-frequency weights with exponent
/// `gamma`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ufm_config_new(
    k: u32,
    ratio: f64,
    reweighted: bool,
    gamma: f64,
    out: *mut *mut UfmConfig,
) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        let file = ConfigFile {
            k: Some(k as usize),
            ratio: Some(ratio),
            weighting: WeightingFile {
                mode: Some(if reweighted { WeightingMode::Reweighted } else { WeightingMode::Vanilla }),
                gamma: Some(gamma),
            },
            ..Default::default()
        };
        let inner = resolve(file, ConfigFile::default(), None)?;
        *out = Box::into_raw(Box::new(UfmConfig { inner }));
        Ok(())
    })
}

/// Parses and resolves a TOML config.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ufm_config_from_toml(toml: *const c_char, out: *mut *mut UfmConfig) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        let text = str_arg(toml, "toml")?;
        let file = ConfigFile::from_toml_str(text, Path::new("<string>"))?;
        let inner = resolve(file, ConfigFile::default(), None)?;
        *out = Box::into_raw(Box::new(UfmConfig { inner }));
        Ok(())
    })
}

/// Reads, parses and resolves a TOML config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ufm_config_from_file(path: *const c_char, out: *mut *mut UfmConfig) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        let path = Path::new(str_arg(path, "path")?);
        let file = ConfigFile::load(path)?;
        let inner = resolve(file, ConfigFile::default(), None)?;
        *out = Box::into_raw(Box::new(UfmConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from a `ufm_config_*` constructor that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn ufm_config_free(cfg: *mut UfmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Canonical TOML of the resolved config; free with `ufm_string_free`.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ufm_config_to_toml(cfg: *const UfmConfig, out: *mut *mut c_char) -> i32 {
    guard(|| give_string(ref_arg(cfg, "cfg")?.inner.to_toml(), out))
}

/// Hex SHA-256 of the canonical TOML; free with `ufm_string_free`.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ufm_config_digest(cfg: *const UfmConfig, out: *mut *mut c_char) -> i32 {
    guard(|| give_string(ref_arg(cfg, "cfg")?.inner.digest(), out))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ufm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs gradient descent for `cfg`.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ufm_run_experiment(cfg: *const UfmConfig, out: *mut *mut UfmReport) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        let config = ref_arg(cfg, "cfg")?.inner.clone();
        let report = run_experiment(&config.experiment())?;
        *out = Box::into_raw(Box::new(UfmReport { config, report }));
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle from `ufm_run_experiment`, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn ufm_report_free(report: *mut UfmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of modes, `k − 1`; 0 if `report` is NULL.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ufm_report_num_modes(report: *const UfmReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.sigma.len())
}

/// Number of recorded steps; 0 if `report` is NULL.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ufm_report_num_records(report: *const UfmReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.trajectory.len())
}

/// Rescaled crossing time per mode; NaN where a mode never crossed.
///
/// # Safety
/// `report` must be a live report handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ufm_report_empirical_times(report: *const UfmReport, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let times: Vec<f64> = r.report.empirical_times.iter().map(|t| t.unwrap_or(f64::NAN)).collect();
        fill(&times, out, len)
    })
}

/// Max over records of `|simulated − theory|`, per mode.
///
/// # Safety
/// `report` must be a live report handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ufm_report_theory_error(report: *const UfmReport, out: *mut f64, len: usize) -> i32 {
    guard(|| fill(&ref_arg(report, "report")?.report.theory_error, out, len))
}

/// Mode factors at record `index`.
///
/// # Safety
/// `report` must be a live report handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ufm_report_mode_factors(
    report: *const UfmReport,
    index: usize,
    out: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let row = r.report.trajectory.mode_factors.get(index).ok_or_else(|| {
            fail(
                UFM_ERR_CONFIG,
                format!("record {index} out of range ({} records)", r.report.trajectory.len()),
            )
        })?;
        fill(row, out, len)
    })
}

/// Closed-form learning times and window of the report's problem.
///
/// # Safety
/// `report` must be a live report handle; `times` must hold `len` doubles and
/// `window` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ufm_report_schedule(
    report: *const UfmReport,
    times: *mut f64,
    len: usize,
    window: *mut f64,
) -> i32 {
    guard(|| {
        let r = ref_arg(report, "report")?;
        check_out(window, "window")?;
        fill(&r.report.schedule.times, times, len)?;
        *window = r.report.schedule.window;
        Ok(())
    })
}

/// Writes the configured report files and a manifest under `out_dir`.
///
/// # Safety
/// `report` must be a live report handle; `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ufm_report_write(report: *const UfmReport, out_dir: *const c_char) -> i32 {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let dir = str_arg(out_dir, "out_dir")?;
        emit_reports(&r.report, &r.config, Path::new(dir))?;
        Ok(())
    })
}

/// Closed-form singular values of the centered STEP label matrix with one
/// example per minority class (`k − 1` values).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ufm_closed_form_sigma(k: u32, ratio: f64, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let cfg = StepConfig::with_defaults(k as usize, ratio)?;
        let f = closed_form_factors(&cfg)?;
        fill(f.sigma.as_slice().expect("contiguous"), out, len)
    })
}

/// Effective per-mode weights under inverse-frequency weights with exponent
/// `gamma` (`k − 1` values).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ufm_effective_weights(k: u32, ratio: f64, gamma: f64, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let cfg = StepConfig::with_defaults(k as usize, ratio)?;
        let f = closed_form_factors(&cfg)?;
        let eff = effective_weights(f.v.view(), &step_weights(&cfg, gamma)?)?;
        fill(eff.lambdas.as_slice().expect("contiguous"), out, len)
    })
}

/// Learning times `1/(σᵢλᵢ)` and window from `n` singular values and
/// effective weights.
///
/// # Safety
/// `sigma` and `lambda` must point to `n` doubles, `times` must hold `n`
/// doubles and `window` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ufm_learning_schedule(
    sigma: *const f64,
    lambda: *const f64,
    n: usize,
    times: *mut f64,
    window: *mut f64,
) -> i32 {
    guard(|| {
        if sigma.is_null() || lambda.is_null() {
            return Err(fail(UFM_ERR_NULL, "sigma or lambda is null"));
        }
        check_out(window, "window")?;
        let s = std::slice::from_raw_parts(sigma, n);
        let l = std::slice::from_raw_parts(lambda, n);
        let schedule = learning_schedule(s, l)?;
        fill(&schedule.times, times, n)?;
        *window = schedule.window;
        Ok(())
    })
}

/// Closed-form mode factor at gradient-flow time `t`.
#[no_mangle]
pub extern "C" fn ufm_theory_factor(sigma: f64, lambda: f64, delta: f64, t: f64) -> f64 {
    theory_factor(sigma, lambda, delta, t)
}
