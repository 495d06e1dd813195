//! C ABI over rulkit: load a checkpoint, stream samples, read estimates.
//!
//! Every fallible function returns a [`RulkitStatus`]. On failure the
//! message is available from [`rulkit_last_error`] on the same thread until
//! the next failing call. Handles are opaque and must be released with their
//! matching `*_free` function.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use rulkit::ingest::RawSample;
use rulkit::labeling::{compute_soh, CapacityPoint};
use rulkit::pipeline::{load_bundle, Estimate, ModelBundle, OnlinePredictor, PipelineError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RulkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    VersionMismatch = 4,
    CorruptCheckpoint = 5,
    NonMonotonicTimestamp = 6,
    Empty = 7,
    Panic = 8,
}

/// Loaded checkpoint. Immutable; may be shared by several predictors.
pub struct RulkitModel {
    bundle: Arc<ModelBundle>,
}

/// Streaming estimator for one cell.
pub struct RulkitPredictor {
    inner: OnlinePredictor,
    pending: VecDeque<Estimate>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RulkitEstimate {
    /// Grid time of the window's last row, seconds.
    pub timestamp_s: f64,
    /// Remaining discharge throughput before end of life, amp-hours.
    pub remaining_ah: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: RulkitStatus, msg: impl Into<String>) -> RulkitStatus {
    set_error(msg);
    status
}

fn status_of(e: &PipelineError) -> RulkitStatus {
    match e {
        PipelineError::VersionMismatch { .. } => RulkitStatus::VersionMismatch,
        PipelineError::CorruptCheckpoint(_) => RulkitStatus::CorruptCheckpoint,
        PipelineError::Io(_) => RulkitStatus::Io,
        PipelineError::NonMonotonicTimestamp { .. } => RulkitStatus::NonMonotonicTimestamp,
        _ => RulkitStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> RulkitStatus) -> RulkitStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(RulkitStatus::Panic, "internal panic"))
}

fn finish_load(result: Result<ModelBundle, PipelineError>, out: *mut *mut RulkitModel) -> RulkitStatus {
    match result {
        Ok(bundle) => {
            let model = Box::new(RulkitModel {
                bundle: Arc::new(bundle),
            });
            // SAFETY: the caller checked `out` for null.
            unsafe { *out = Box::into_raw(model) };
            RulkitStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

/// Loads a checkpoint file. On success `*out` owns a new model.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rulkit_model_load(path: *const c_char, out: *mut *mut RulkitModel) -> RulkitStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(RulkitStatus::NullPointer, "null argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(RulkitStatus::InvalidArgument, "path is not UTF-8");
        };
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) => return fail(RulkitStatus::Io, format!("cannot open {path}: {e}")),
        };
        finish_load(load_bundle(std::io::BufReader::new(file)), out)
    })
}

/// Loads a checkpoint from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rulkit_model_load_bytes(data: *const u8, len: usize, out: *mut *mut RulkitModel) -> RulkitStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(RulkitStatus::NullPointer, "null argument");
        }
        let bytes = std::slice::from_raw_parts(data, len);
        finish_load(load_bundle(bytes), out)
    })
}

/// Releases a model. Predictors created from it stay valid.
///
/// # Safety
/// `model` must come from a load function and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rulkit_model_free(model: *mut RulkitModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Resampled rows needed before the first estimate; 0 for a null model.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn rulkit_model_window_len(model: *const RulkitModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.window_len())
}

/// Resampling period in seconds; 0 for a null model.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn rulkit_model_rate_s(model: *const RulkitModel) -> f64 {
    model.as_ref().map_or(0.0, |m| m.bundle.config.rate_s)
}

/// Creates a predictor sharing `model`'s parameters.
///
/// # Safety
/// `model` must be a live model and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rulkit_predictor_new(model: *const RulkitModel, out: *mut *mut RulkitPredictor) -> RulkitStatus {
    guard(|| {
        let (Some(model), false) = (model.as_ref(), out.is_null()) else {
            return fail(RulkitStatus::NullPointer, "null argument");
        };
        let p = Box::new(RulkitPredictor {
            inner: OnlinePredictor::new(Arc::clone(&model.bundle)),
            pending: VecDeque::new(),
        });
        *out = Box::into_raw(p);
        RulkitStatus::Ok
    })
}

/// Feeds one sample. Completed estimates are queued for
/// [`rulkit_predictor_pop`]; `*ready` (if non-null) receives the queue length.
///
/// # Safety
/// `predictor` must be live; `ready` null or valid.
#[no_mangle]
pub unsafe extern "C" fn rulkit_predictor_push(
    predictor: *mut RulkitPredictor,
    timestamp_s: f64,
    voltage_v: f64,
    current_a: f64,
    temperature_c: f64,
    ready: *mut usize,
) -> RulkitStatus {
    guard(|| {
        let Some(p) = predictor.as_mut() else {
            return fail(RulkitStatus::NullPointer, "null predictor");
        };
        let sample = RawSample {
            timestamp_s,
            voltage_v,
            current_a,
            temperature_c,
        };
        match p.inner.push(sample) {
            Ok(est) => {
                p.pending.extend(est);
                if let Some(r) = ready.as_mut() {
                    *r = p.pending.len();
                }
                RulkitStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Ends the stream, queueing any estimate on the final sample's grid row.
///
/// # Safety
/// `predictor` must be live; `ready` null or valid.
#[no_mangle]
pub unsafe extern "C" fn rulkit_predictor_finish(predictor: *mut RulkitPredictor, ready: *mut usize) -> RulkitStatus {
    guard(|| {
        let Some(p) = predictor.as_mut() else {
            return fail(RulkitStatus::NullPointer, "null predictor");
        };
        let est = p.inner.finish();
        p.pending.extend(est);
        if let Some(r) = ready.as_mut() {
            *r = p.pending.len();
        }
        RulkitStatus::Ok
    })
}

/// Takes the oldest queued estimate, or returns `RULKIT_STATUS_EMPTY`.
///
/// # Safety
/// `predictor` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rulkit_predictor_pop(predictor: *mut RulkitPredictor, out: *mut RulkitEstimate) -> RulkitStatus {
    guard(|| {
        let (Some(p), Some(out)) = (predictor.as_mut(), out.as_mut()) else {
            return fail(RulkitStatus::NullPointer, "null argument");
        };
        match p.pending.pop_front() {
            Some(e) => {
                *out = RulkitEstimate {
                    timestamp_s: e.timestamp_s,
                    remaining_ah: e.remaining_ah,
                };
                RulkitStatus::Ok
            }
            None => RulkitStatus::Empty,
        }
    })
}

/// # Safety
/// `predictor` must come from [`rulkit_predictor_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rulkit_predictor_free(predictor: *mut RulkitPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// State of health in percent: `100 * capacity / nominal`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rulkit_soh_percent(capacity_ah: f64, nominal_capacity_ah: f64, out: *mut f64) -> RulkitStatus {
    guard(|| {
        let Some(out) = out.as_mut() else {
            return fail(RulkitStatus::NullPointer, "null output");
        };
        let point = CapacityPoint {
            cumulative_discharge_ah: 0.0,
            capacity_ah,
        };
        match compute_soh(&[point], nominal_capacity_ah) {
            Ok(soh) => {
                *out = soh[0].soh_pct;
                RulkitStatus::Ok
            }
            Err(e) => fail(RulkitStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rulkit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn rulkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
