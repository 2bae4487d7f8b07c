//! C interface to the simulator.
//!
//! Scenarios and traces are opaque handles owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns an [`FlStatus`]; the message
//! of the most recent failure on the calling thread is available from
//! [`fl_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use finality_lab::cli::{parse_scenario, serialize_scenario, serialize_trace, serialize_verdicts};
use finality_lab::properties::{run_all, Verdict};
use finality_lab::simnet::{run, SimConfig, Trace};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Simulation = 4,
    OutOfRange = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlVerdict {
    Pass = 0,
    Skip = 1,
    Fail = 2,
}

pub struct FlScenario {
    config: SimConfig,
}

pub struct FlTrace {
    trace: Trace,
    verdicts: Vec<(&'static str, Verdict)>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: FlStatus, msg: impl Into<String>) -> FlStatus {
    let text = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
    status
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message of the last failed call on this thread, or null. Valid until the next failure.
#[no_mangle]
pub extern "C" fn fl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses scenario text into a new handle stored in `*out`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_scenario_parse(text: *const c_char, out: *mut *mut FlScenario) -> FlStatus {
    if text.is_null() || out.is_null() {
        return fail(FlStatus::NullArgument, "null argument");
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        return fail(FlStatus::InvalidUtf8, "scenario is not UTF-8");
    };
    match parse_scenario(text) {
        Ok(config) => {
            *out = Box::into_raw(Box::new(FlScenario { config }));
            FlStatus::Ok
        }
        Err(e) => fail(FlStatus::Parse, e.to_string()),
    }
}

/// Canonical text of a scenario, with every key spelled out. Free with [`fl_string_free`].
///
/// # Safety
/// `scenario` must be null or a handle from [`fl_scenario_parse`].
#[no_mangle]
pub unsafe extern "C" fn fl_scenario_text(scenario: *const FlScenario) -> *mut c_char {
    match scenario.as_ref() {
        Some(s) => to_c_string(serialize_scenario(&s.config)),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `scenario` must be null or a handle from [`fl_scenario_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fl_scenario_free(scenario: *mut FlScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario and checks every property, storing the trace in `*out`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_run(scenario: *const FlScenario, out: *mut *mut FlTrace) -> FlStatus {
    let Some(s) = scenario.as_ref() else {
        return fail(FlStatus::NullArgument, "null scenario");
    };
    if out.is_null() {
        return fail(FlStatus::NullArgument, "null output pointer");
    }
    match run(&s.config) {
        Ok(trace) => {
            let verdicts = run_all(&trace);
            *out = Box::into_raw(Box::new(FlTrace { trace, verdicts }));
            FlStatus::Ok
        }
        Err(e) => fail(FlStatus::Simulation, e.to_string()),
    }
}

/// # Safety
/// `trace` must be null or a handle from [`fl_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fl_trace_free(trace: *mut FlTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of property checks recorded for a trace.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_check_count(trace: *const FlTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.verdicts.len())
}

/// Name and outcome of check `index`. `name` may be null; otherwise it receives a
/// static string.
///
/// # Safety
/// `trace` must be a live handle and `verdict` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_check(
    trace: *const FlTrace,
    index: usize,
    name: *mut *const c_char,
    verdict: *mut FlVerdict,
) -> FlStatus {
    let Some(t) = trace.as_ref() else {
        return fail(FlStatus::NullArgument, "null trace");
    };
    if verdict.is_null() {
        return fail(FlStatus::NullArgument, "null verdict pointer");
    }
    let Some((check, v)) = t.verdicts.get(index) else {
        return fail(FlStatus::OutOfRange, format!("check {index} of {}", t.verdicts.len()));
    };
    *verdict = match v {
        Verdict::Pass => FlVerdict::Pass,
        Verdict::Skip(_) => FlVerdict::Skip,
        Verdict::Fail(_) => FlVerdict::Fail,
    };
    if !name.is_null() {
        *name = check_name(check);
    }
    FlStatus::Ok
}

fn check_name(name: &str) -> *const c_char {
    const NAMES: [&CStr; 10] = [
        c"available_safety",
        c"finalized_safety",
        c"honest_unslashable",
        c"reorg_resilience",
        c"finality_liveness",
        c"two_slot_liveness",
        c"fastconf_liveness",
        c"kappa_liveness",
        c"prefix_monotone",
        c"async_resilience",
    ];
    NAMES.iter().find(|n| n.to_bytes() == name.as_bytes()).map_or(ptr::null(), |n| n.as_ptr())
}

/// 1 if no check failed, 0 otherwise (also for a null handle).
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_trace_passed(trace: *const FlTrace) -> i32 {
    trace.as_ref().map_or(0, |t| i32::from(!t.verdicts.iter().any(|(_, v)| v.is_fail())))
}

/// Line-oriented trace text. Free with [`fl_string_free`].
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_trace_text(trace: *const FlTrace) -> *mut c_char {
    match trace.as_ref() {
        Some(t) => to_c_string(serialize_trace(&t.trace)),
        None => ptr::null_mut(),
    }
}

/// One `name|verdict` line per check. Free with [`fl_string_free`].
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_verdict_text(trace: *const FlTrace) -> *mut c_char {
    match trace.as_ref() {
        Some(t) => to_c_string(serialize_verdicts(&t.verdicts)),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
