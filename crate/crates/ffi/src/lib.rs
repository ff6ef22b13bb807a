//! C ABI for the take-it-or-leave-it survey simulator.
//!
//! The surface follows the usual conventions for embedding from other
//! languages: experiments are opaque handles created from TOML config text
//! or a file path, every call returns a [`TioliStatus`] code, rich results
//! come back as heap-allocated JSON strings released with
//! [`tioli_string_free`], and the most recent failure message is retrievable
//! per thread via [`tioli_last_error`]. The generated header lands in
//! `include/tioli.h` at build time.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::{c_char, size_t};

use tioli::benchmark::report_from_mean_cost;
use tioli::harness::{
    default_audit_scripts, empirical_dp_audit, load_config, parse_config, run_trials,
    ExperimentSpec,
};
use tioli::population::PopulationOracle;
use tioli::rng::SimRng;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).ok();
    });
}

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TioliStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The config could not be read, parsed, or validated; see
    /// `tioli_last_error`.
    ConfigError = 3,
    /// The simulation failed; see `tioli_last_error`.
    RunError = 4,
    /// Internal panic; see `tioli_last_error`.
    Panic = 5,
}

/// Opaque experiment handle: a validated config plus seed and trial count.
pub struct TioliExperiment {
    spec: ExperimentSpec,
}

/// Released outcome of a single survey run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TioliSurveyResult {
    /// Final normalized estimate.
    pub estimate: f64,
    /// Total payments across all epochs.
    pub total_payments: f64,
    /// Epoch whose noisy count cleared the participation target.
    pub final_epoch: u32,
    /// Epochs executed.
    pub epochs_run: u32,
}

fn guard<F: FnOnce() -> TioliStatus>(f: F) -> TioliStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(message);
            TioliStatus::Panic
        }
    }
}

unsafe fn cstr_to_str<'a>(ptr: *const c_char) -> Result<&'a str, TioliStatus> {
    if ptr.is_null() {
        return Err(TioliStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("argument is not valid UTF-8".into());
        TioliStatus::InvalidUtf8
    })
}

fn emit_handle(
    spec_result: Result<ExperimentSpec, String>,
    out: *mut *mut TioliExperiment,
) -> TioliStatus {
    match spec_result {
        Ok(spec) => {
            let handle = Box::new(TioliExperiment { spec });
            unsafe { *out = Box::into_raw(handle) };
            TioliStatus::Ok
        }
        Err(message) => {
            set_last_error(message);
            TioliStatus::ConfigError
        }
    }
}

/// Creates an experiment from a config file path.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer;
/// on success the caller owns the handle and must release it with
/// [`tioli_experiment_free`].
#[no_mangle]
pub unsafe extern "C" fn tioli_experiment_from_file(
    path: *const c_char,
    out: *mut *mut TioliExperiment,
) -> TioliStatus {
    if out.is_null() {
        return TioliStatus::NullArgument;
    }
    guard(|| {
        let path = match cstr_to_str(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        emit_handle(
            load_config(Path::new(path))
                .map(|loaded| loaded.spec)
                .map_err(|e| e.to_string()),
            out,
        )
    })
}

/// Creates an experiment from config text.
///
/// # Safety
/// Same contract as [`tioli_experiment_from_file`].
#[no_mangle]
pub unsafe extern "C" fn tioli_experiment_from_string(
    config_toml: *const c_char,
    out: *mut *mut TioliExperiment,
) -> TioliStatus {
    if out.is_null() {
        return TioliStatus::NullArgument;
    }
    guard(|| {
        let text = match cstr_to_str(config_toml) {
            Ok(t) => t,
            Err(status) => return status,
        };
        emit_handle(
            parse_config(text)
                .map(|loaded| loaded.spec)
                .map_err(|e| e.to_string()),
            out,
        )
    })
}

/// Sets the master seed. All outputs are pure functions of (config, seed).
///
/// # Safety
/// `handle` must be a live pointer from a constructor.
#[no_mangle]
pub unsafe extern "C" fn tioli_experiment_set_seed(
    handle: *mut TioliExperiment,
    seed: u64,
) -> TioliStatus {
    let Some(experiment) = handle.as_mut() else {
        return TioliStatus::NullArgument;
    };
    experiment.spec = experiment.spec.clone().with_seed(seed);
    TioliStatus::Ok
}

/// Sets the batch size used by [`tioli_summary_json`].
///
/// # Safety
/// `handle` must be a live pointer from a constructor.
#[no_mangle]
pub unsafe extern "C" fn tioli_experiment_set_trials(
    handle: *mut TioliExperiment,
    trials: u64,
) -> TioliStatus {
    let Some(experiment) = handle.as_mut() else {
        return TioliStatus::NullArgument;
    };
    match experiment.spec.clone().with_trials(trials) {
        Ok(spec) => {
            experiment.spec = spec;
            TioliStatus::Ok
        }
        Err(e) => {
            set_last_error(e.to_string());
            TioliStatus::ConfigError
        }
    }
}

/// Releases an experiment handle. Null is a no-op.
///
/// # Safety
/// `handle` must have come from a constructor and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn tioli_experiment_free(handle: *mut TioliExperiment) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Runs one survey with the stream derived from (seed, trial) and fills
/// `result`.
///
/// # Safety
/// `handle` and `result` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tioli_survey_run(
    handle: *const TioliExperiment,
    trial: u64,
    result: *mut TioliSurveyResult,
) -> TioliStatus {
    let Some(experiment) = handle.as_ref() else {
        return TioliStatus::NullArgument;
    };
    if result.is_null() {
        return TioliStatus::NullArgument;
    }
    guard(|| {
        let spec = &experiment.spec;
        let mut rng = SimRng::for_trial(spec.master_seed, trial);
        let mut oracle = PopulationOracle::new(&spec.population, &mut rng);
        match tioli::mechanism::run_survey(&spec.mechanism, &mut oracle, &mut rng) {
            Ok(run) => {
                let transcript = &run.outcome.transcript;
                *result = TioliSurveyResult {
                    estimate: run.outcome.estimate,
                    total_payments: transcript.total_payments,
                    final_epoch: transcript.final_epoch,
                    epochs_run: transcript.final_epoch,
                };
                TioliStatus::Ok
            }
            Err(e) => {
                set_last_error(e.to_string());
                TioliStatus::RunError
            }
        }
    })
}

fn emit_json<T: serde::Serialize>(value: &T, out_json: *mut *mut c_char) -> TioliStatus {
    match serde_json::to_string_pretty(value) {
        Ok(text) => match CString::new(text) {
            Ok(cstring) => {
                unsafe { *out_json = cstring.into_raw() };
                TioliStatus::Ok
            }
            Err(e) => {
                set_last_error(e.to_string());
                TioliStatus::RunError
            }
        },
        Err(e) => {
            set_last_error(e.to_string());
            TioliStatus::RunError
        }
    }
}

/// Runs the configured batch of trials and returns the aggregate summary as
/// JSON. Free the string with [`tioli_string_free`].
///
/// # Safety
/// `handle` and `out_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tioli_summary_json(
    handle: *const TioliExperiment,
    out_json: *mut *mut c_char,
) -> TioliStatus {
    let Some(experiment) = handle.as_ref() else {
        return TioliStatus::NullArgument;
    };
    if out_json.is_null() {
        return TioliStatus::NullArgument;
    }
    guard(|| {
        let output = run_trials(&experiment.spec);
        emit_json(&output.summary, out_json)
    })
}

/// Runs the batch and returns the benchmark cost comparison as JSON. Free
/// the string with [`tioli_string_free`].
///
/// # Safety
/// `handle` and `out_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tioli_benchmark_json(
    handle: *const TioliExperiment,
    out_json: *mut *mut c_char,
) -> TioliStatus {
    let Some(experiment) = handle.as_ref() else {
        return TioliStatus::NullArgument;
    };
    if out_json.is_null() {
        return TioliStatus::NullArgument;
    }
    guard(|| {
        let spec = &experiment.spec;
        let output = run_trials(spec);
        let report = report_from_mean_cost(
            &spec.population,
            &spec.mechanism,
            output.summary.mean_cost,
            spec.trials as usize,
        );
        emit_json(&report, out_json)
    })
}

/// Runs the two-arm participation-privacy audit with the default scripts
/// (one flipped first-epoch decision) and returns the report as JSON. Free
/// the string with [`tioli_string_free`].
///
/// # Safety
/// `handle` and `out_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tioli_audit_json(
    handle: *const TioliExperiment,
    runs_per_arm: u64,
    out_json: *mut *mut c_char,
) -> TioliStatus {
    let Some(experiment) = handle.as_ref() else {
        return TioliStatus::NullArgument;
    };
    if out_json.is_null() {
        return TioliStatus::NullArgument;
    }
    guard(|| {
        let spec = &experiment.spec;
        let (script_a, script_b) = default_audit_scripts(&spec.mechanism);
        match empirical_dp_audit(
            &spec.mechanism,
            &script_a,
            &script_b,
            runs_per_arm,
            spec.master_seed,
            &spec.params,
        ) {
            Ok(report) => emit_json(&report, out_json),
            Err(e) => {
                set_last_error(e.to_string());
                TioliStatus::RunError
            }
        }
    })
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by a `*_json` function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn tioli_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copies the current thread's last error message into `buffer` (truncated
/// if needed, always NUL-terminated when `length > 0`) and returns the full
/// message length in bytes, excluding the terminator. Returns 0 when no
/// error is recorded.
///
/// # Safety
/// `buffer` must point to at least `length` writable bytes, or be null with
/// `length == 0` to query the required size.
#[no_mangle]
pub unsafe extern "C" fn tioli_last_error(buffer: *mut c_char, length: size_t) -> size_t {
    LAST_ERROR.with(|slot| {
        let borrowed = slot.borrow();
        let Some(message) = borrowed.as_ref() else {
            return 0;
        };
        let bytes = message.as_bytes();
        if !buffer.is_null() && length > 0 {
            let copy_len = bytes.len().min(length - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, copy_len);
            *buffer.add(copy_len) = 0;
        }
        bytes.len()
    })
}

/// Static library version string; do not free.
#[no_mangle]
pub extern "C" fn tioli_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
schema_version = 1

[mechanism]
alpha = 0.5
eta = 0.1

[population]
types = [
  { name = "positive", q = 1.0 },
  { name = "negative", q = 0.0 },
]
cells = [
  { mass = 0.3, type = "positive", v = 0.0 },
  { mass = 0.7, type = "negative", v = 0.0 },
]

[suites]
trials = 10
"#;

    fn handle_from(config: &str) -> *mut TioliExperiment {
        let text = CString::new(config).unwrap();
        let mut handle: *mut TioliExperiment = std::ptr::null_mut();
        let status = unsafe { tioli_experiment_from_string(text.as_ptr(), &mut handle) };
        assert_eq!(status, TioliStatus::Ok);
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn build_run_and_free() {
        let handle = handle_from(CONFIG);
        unsafe {
            assert_eq!(tioli_experiment_set_seed(handle, 7), TioliStatus::Ok);
            let mut result = TioliSurveyResult {
                estimate: 0.0,
                total_payments: 0.0,
                final_epoch: 0,
                epochs_run: 0,
            };
            assert_eq!(tioli_survey_run(handle, 0, &mut result), TioliStatus::Ok);
            assert_eq!(result.final_epoch, 1);
            assert!((result.estimate - 0.3).abs() < 0.2);
            assert!(result.total_payments > 0.0);
            tioli_experiment_free(handle);
        }
    }

    #[test]
    fn survey_is_deterministic_per_trial_index() {
        let handle = handle_from(CONFIG);
        unsafe {
            tioli_experiment_set_seed(handle, 11);
            let mut a = std::mem::zeroed::<TioliSurveyResult>();
            let mut b = std::mem::zeroed::<TioliSurveyResult>();
            assert_eq!(tioli_survey_run(handle, 3, &mut a), TioliStatus::Ok);
            assert_eq!(tioli_survey_run(handle, 3, &mut b), TioliStatus::Ok);
            assert_eq!(a.estimate, b.estimate);
            assert_eq!(a.total_payments, b.total_payments);
            tioli_experiment_free(handle);
        }
    }

    #[test]
    fn summary_json_round_trips() {
        let handle = handle_from(CONFIG);
        unsafe {
            tioli_experiment_set_seed(handle, 5);
            tioli_experiment_set_trials(handle, 4);
            let mut json: *mut c_char = std::ptr::null_mut();
            assert_eq!(tioli_summary_json(handle, &mut json), TioliStatus::Ok);
            let text = CStr::from_ptr(json).to_str().unwrap();
            let value: serde_json::Value = serde_json::from_str(text).unwrap();
            assert_eq!(value["trials"], 4);
            assert_eq!(value["master_seed"], 5);
            tioli_string_free(json);
            tioli_experiment_free(handle);
        }
    }

    #[test]
    fn benchmark_and_audit_emit_json() {
        let handle = handle_from(CONFIG);
        unsafe {
            tioli_experiment_set_trials(handle, 4);
            let mut json: *mut c_char = std::ptr::null_mut();
            assert_eq!(tioli_benchmark_json(handle, &mut json), TioliStatus::Ok);
            assert!(CStr::from_ptr(json).to_str().unwrap().contains("ratio"));
            tioli_string_free(json);

            let mut audit: *mut c_char = std::ptr::null_mut();
            assert_eq!(tioli_audit_json(handle, 2_000, &mut audit), TioliStatus::Ok);
            let value: serde_json::Value =
                serde_json::from_str(CStr::from_ptr(audit).to_str().unwrap()).unwrap();
            assert_eq!(value["passes"], true);
            tioli_string_free(audit);
            tioli_experiment_free(handle);
        }
    }

    #[test]
    fn bad_config_reports_error_message() {
        let text = CString::new(CONFIG.replace("alpha = 0.5", "alpha = 9.0")).unwrap();
        let mut handle: *mut TioliExperiment = std::ptr::null_mut();
        let status = unsafe { tioli_experiment_from_string(text.as_ptr(), &mut handle) };
        assert_eq!(status, TioliStatus::ConfigError);
        assert!(handle.is_null());
        let needed = unsafe { tioli_last_error(std::ptr::null_mut(), 0) };
        assert!(needed > 0);
        let mut buffer = vec![0i8; needed + 1];
        unsafe { tioli_last_error(buffer.as_mut_ptr().cast(), buffer.len()) };
        let message = unsafe { CStr::from_ptr(buffer.as_ptr().cast()) }
            .to_str()
            .unwrap();
        assert!(message.contains("alpha"), "message: {message}");
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            let mut handle: *mut TioliExperiment = std::ptr::null_mut();
            assert_eq!(
                tioli_experiment_from_string(std::ptr::null(), &mut handle),
                TioliStatus::NullArgument
            );
            assert_eq!(
                tioli_survey_run(std::ptr::null(), 0, std::ptr::null_mut()),
                TioliStatus::NullArgument
            );
            tioli_experiment_free(std::ptr::null_mut());
            tioli_string_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn version_is_a_c_string() {
        let version = unsafe { CStr::from_ptr(tioli_version()) };
        assert!(!version.to_str().unwrap().is_empty());
    }
}
