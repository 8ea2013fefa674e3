//! C ABI for the neurolan engine.
//!
//! Objects cross the boundary as opaque handles (`nl_model_t`,
//! `nl_record_t`, `nl_fit_t`); every fallible call returns an [`NlStatus`]
//! and stores a human-readable message retrievable through
//! [`nl_last_error_message`] on failure. Handles are freed with their
//! `*_free` function; strings returned by the library are freed with
//! [`nl_string_free`]. All functions are safe to call from multiple threads
//! as long as each handle is used from one thread at a time; the error
//! message slot is thread-local.
//!
//! The generated header lives in `include/neurolan.h` and is refreshed by
//! the build script whenever this file changes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use neurolan::config::{EstimatorConfig, ModelConfig};
use neurolan::error::Error;
use neurolan::estimator::{mle, EstimatorOptions, MleResult};
use neurolan::likelihood::{log_likelihood_ratio, score};
use neurolan::model::{ModelSpec, Theta};
use neurolan::simulator::{simulate, TrajectoryRecord};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlStatus {
    /// Success.
    NlOk = 0,
    /// A required pointer argument was null.
    NlNullPointer = 1,
    /// A string argument was not valid UTF-8.
    NlInvalidUtf8 = 2,
    /// Malformed configuration or JSON input.
    NlConfig = 3,
    /// A parameter vector violated the model's admissible box.
    NlParamDomain = 4,
    /// Invalid runtime input (dimensions, horizons, indices, …).
    NlInvalidInput = 5,
    /// A numerical operation failed.
    NlNumerics = 6,
    /// Panic or other unexpected internal failure.
    NlInternal = 7,
}

/// Simulated trajectory handle; create with `nl_simulate` or
/// `nl_record_from_jsonl`, destroy with `nl_record_free`.
pub struct NlRecord {
    inner: TrajectoryRecord,
}

/// Model handle; create with `nl_model_from_json`, destroy with
/// `nl_model_free`.
pub struct NlModel {
    inner: Arc<ModelSpec>,
}

/// Fit handle; create with `nl_fit`, destroy with `nl_fit_free`.
pub struct NlFit {
    inner: MleResult,
}

/// Plain-data summary of a fit, safe to copy across the boundary.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NlFitSummary {
    /// 1 when the gradient test passed at the returned parameter.
    pub converged: u8,
    /// 1 when some coordinate of the maximizer sits on the box boundary.
    pub at_boundary: u8,
    /// Newton iterations spent on the winning start.
    pub iterations: u64,
    /// Log-likelihood ratio of the maximizer against the reference point.
    pub log_likelihood_ratio: f64,
    /// Infinity norm of the projected gradient at the maximizer.
    pub gradient_norm: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NlStatus {
    match e {
        Error::Config(_) | Error::Json(_) => NlStatus::NlConfig,
        Error::ParamDomain(_) => NlStatus::NlParamDomain,
        Error::InvalidInput(_) => NlStatus::NlInvalidInput,
        Error::Numerics(_) => NlStatus::NlNumerics,
        Error::Io(_) => NlStatus::NlInternal,
    }
}

fn fail(e: Error) -> NlStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

/// Runs `body` with panics converted to `NlInternal`.
fn guarded(body: impl FnOnce() -> NlStatus) -> NlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            NlStatus::NlInternal
        }
    }
}

/// Reads a required UTF-8 C string argument.
///
/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn text<'a>(ptr: *const c_char) -> Result<&'a str, NlStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(NlStatus::NlNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        NlStatus::NlInvalidUtf8
    })
}

/// Reads a required `len`-vector argument into a `Theta`.
///
/// # Safety
/// `ptr` must be null or point to `len` readable doubles.
unsafe fn theta_arg(ptr: *const f64, len: usize) -> Result<Theta, NlStatus> {
    if ptr.is_null() {
        set_error("null parameter vector".into());
        return Err(NlStatus::NlNullPointer);
    }
    Ok(Theta(std::slice::from_raw_parts(ptr, len).to_vec()))
}

macro_rules! deref {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                set_error("null handle argument".into());
                return NlStatus::NlNullPointer;
            }
        }
    };
}

macro_rules! out_slot {
    ($ptr:expr) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => {
                set_error("null output argument".into());
                return NlStatus::NlNullPointer;
            }
        }
    };
}

/// Returns the error message of the last failing call on this thread as a
/// newly allocated string, or null when no call has failed. Free the result
/// with `nl_string_free`.
#[no_mangle]
pub extern "C" fn nl_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Frees a string previously returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from a `neurolan` function that
/// documents `nl_string_free` as its deallocator, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a model from the JSON text of a model section, e.g.
///
/// ```json
/// {"drift": {"type": "zero"}, "reset": {"type": "none"},
///  "mark_law": {"type": "dirac", "value": 0.2},
///  "initial_law": {"type": "uniform", "min": 0.0, "max": 1.0},
///  "rate": {"family": "constant"},
///  "theta_box": {"lower": [0.2], "upper": [3.0]}}
/// ```
///
/// On success writes a new handle to `out`; free it with `nl_model_free`.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_model_from_json(
    json: *const c_char,
    out: *mut *mut NlModel,
) -> NlStatus {
    guarded(|| {
        let slot = out_slot!(out);
        let text = match text(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ModelConfig::from_json(text).and_then(|c| c.build()) {
            Ok(model) => {
                *slot = Box::into_raw(Box::new(NlModel { inner: model }));
                NlStatus::NlOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Destroys a model handle; null is ignored.
///
/// # Safety
/// `model` must be null or an unfreed handle from `nl_model_from_json`.
#[no_mangle]
pub unsafe extern "C" fn nl_model_free(model: *mut NlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the parameter dimension of the model to `out`.
///
/// # Safety
/// `model` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_model_param_dim(
    model: *const NlModel,
    out: *mut usize,
) -> NlStatus {
    guarded(|| {
        let m = deref!(model);
        *out_slot!(out) = m.inner.theta_box().dim();
        NlStatus::NlOk
    })
}

/// Simulates `n` neurons over `[0, horizon]` at the true parameter
/// `theta_star` (length `theta_len`) and writes a new record handle to
/// `out`; free it with `nl_record_free`. Equal seeds reproduce the record
/// bit for bit.
///
/// # Safety
/// `model` must be a valid handle, `theta_star` must point to `theta_len`
/// readable doubles, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_simulate(
    model: *const NlModel,
    theta_star: *const f64,
    theta_len: usize,
    n: usize,
    horizon: f64,
    seed: u64,
    out: *mut *mut NlRecord,
) -> NlStatus {
    guarded(|| {
        let m = deref!(model);
        let slot = out_slot!(out);
        let theta = match theta_arg(theta_star, theta_len) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match simulate(&m.inner, &theta, n, horizon, seed) {
            Ok(record) => {
                *slot = Box::into_raw(Box::new(NlRecord { inner: record }));
                NlStatus::NlOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Destroys a record handle; null is ignored.
///
/// # Safety
/// `record` must be null or an unfreed record handle.
#[no_mangle]
pub unsafe extern "C" fn nl_record_free(record: *mut NlRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Writes the number of spike events in the record to `out`.
///
/// # Safety
/// `record` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_record_event_count(
    record: *const NlRecord,
    out: *mut usize,
) -> NlStatus {
    guarded(|| {
        let r = deref!(record);
        *out_slot!(out) = r.inner.events().len();
        NlStatus::NlOk
    })
}

/// Serializes the record to its JSON-lines wire format as a newly allocated
/// string; free it with `nl_string_free`. The text reloads bit-identically
/// through `nl_record_from_jsonl`.
///
/// # Safety
/// `record` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_record_to_jsonl(
    record: *const NlRecord,
    out: *mut *mut c_char,
) -> NlStatus {
    guarded(|| {
        let r = deref!(record);
        let slot = out_slot!(out);
        match CString::new(r.inner.to_jsonl()) {
            Ok(c) => {
                *slot = c.into_raw();
                NlStatus::NlOk
            }
            Err(_) => {
                set_error("record serialization produced an interior NUL".into());
                NlStatus::NlInternal
            }
        }
    })
}

/// Reloads a record from its JSON-lines wire format under the given model
/// and writes a new handle to `out`; free it with `nl_record_free`.
///
/// # Safety
/// `model` must be a valid handle, `jsonl` a valid NUL-terminated string,
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_record_from_jsonl(
    model: *const NlModel,
    jsonl: *const c_char,
    out: *mut *mut NlRecord,
) -> NlStatus {
    guarded(|| {
        let m = deref!(model);
        let slot = out_slot!(out);
        let text = match text(jsonl) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match TrajectoryRecord::from_jsonl(&m.inner, text) {
            Ok(record) => {
                *slot = Box::into_raw(Box::new(NlRecord { inner: record }));
                NlStatus::NlOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes the path log-likelihood ratio of `theta` against `theta_ref`
/// (both of length `theta_len`) to `out`.
///
/// # Safety
/// `record` must be a valid handle, both parameter pointers must point to
/// `theta_len` readable doubles, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_log_likelihood_ratio(
    record: *const NlRecord,
    theta: *const f64,
    theta_ref: *const f64,
    theta_len: usize,
    out: *mut f64,
) -> NlStatus {
    guarded(|| {
        let r = deref!(record);
        let slot = out_slot!(out);
        let th = match theta_arg(theta, theta_len) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let th_ref = match theta_arg(theta_ref, theta_len) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match log_likelihood_ratio(&r.inner, &th, &th_ref) {
            Ok(v) => {
                *slot = v;
                NlStatus::NlOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes the score (log-likelihood gradient) at `theta` into the caller's
/// buffer `out`, which must hold `theta_len` doubles.
///
/// # Safety
/// `record` must be a valid handle, `theta` must point to `theta_len`
/// readable doubles, and `out` to `theta_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nl_score(
    record: *const NlRecord,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
) -> NlStatus {
    guarded(|| {
        let r = deref!(record);
        if out.is_null() {
            set_error("null output argument".into());
            return NlStatus::NlNullPointer;
        }
        let th = match theta_arg(theta, theta_len) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match score(&r.inner, &th) {
            Ok(g) => {
                std::ptr::copy_nonoverlapping(g.as_slice().as_ptr(), out, theta_len);
                NlStatus::NlOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Fits the maximum-likelihood parameter on the record and writes a new fit
/// handle to `out`; free it with `nl_fit_free`.
///
/// `options_json` may be null for defaults, or the JSON text of an
/// estimator section, e.g. `{"max_iterations": 200, "grad_tolerance": 1e-10}`.
///
/// # Safety
/// `record` must be a valid handle, `options_json` null or a valid
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_fit(
    record: *const NlRecord,
    options_json: *const c_char,
    out: *mut *mut NlFit,
) -> NlStatus {
    guarded(|| {
        let r = deref!(record);
        let slot = out_slot!(out);
        let opts: EstimatorOptions = if options_json.is_null() {
            EstimatorOptions::default()
        } else {
            let text = match text(options_json) {
                Ok(t) => t,
                Err(s) => return s,
            };
            match serde_json::from_str::<EstimatorConfig>(text) {
                Ok(c) => c.to_options(),
                Err(e) => {
                    return fail(Error::Config(format!("estimator schema error: {e}")));
                }
            }
        };
        match mle(&r.inner, &opts) {
            Ok(fit) => {
                *slot = Box::into_raw(Box::new(NlFit { inner: fit }));
                NlStatus::NlOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Destroys a fit handle; null is ignored.
///
/// # Safety
/// `fit` must be null or an unfreed fit handle.
#[no_mangle]
pub unsafe extern "C" fn nl_fit_free(fit: *mut NlFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Copies the fitted parameter into the caller's buffer `out` of `len`
/// doubles; `len` must equal the model's parameter dimension.
///
/// # Safety
/// `fit` must be a valid handle and `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn nl_fit_theta(
    fit: *const NlFit,
    out: *mut f64,
    len: usize,
) -> NlStatus {
    guarded(|| {
        let f = deref!(fit);
        if out.is_null() {
            set_error("null output argument".into());
            return NlStatus::NlNullPointer;
        }
        let theta = f.inner.theta_hat.as_slice();
        if theta.len() != len {
            set_error(format!(
                "buffer length {len} does not match parameter dimension {}",
                theta.len()
            ));
            return NlStatus::NlInvalidInput;
        }
        std::ptr::copy_nonoverlapping(theta.as_ptr(), out, len);
        NlStatus::NlOk
    })
}

/// Writes the plain-data summary of a fit to `out`.
///
/// # Safety
/// `fit` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_fit_summary(
    fit: *const NlFit,
    out: *mut NlFitSummary,
) -> NlStatus {
    guarded(|| {
        let f = deref!(fit);
        *out_slot!(out) = NlFitSummary {
            converged: f.inner.converged as u8,
            at_boundary: f.inner.at_boundary as u8,
            iterations: f.inner.iterations as u64,
            log_likelihood_ratio: f.inner.log_likelihood,
            gradient_norm: f.inner.grad_norm,
        };
        NlStatus::NlOk
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL_JSON: &str = r#"{
        "drift": {"type": "zero"},
        "reset": {"type": "none"},
        "mark_law": {"type": "dirac", "value": 0.2},
        "initial_law": {"type": "uniform", "min": 0.0, "max": 1.0},
        "rate": {"family": "constant"},
        "theta_box": {"lower": [0.2], "upper": [3.0]}
    }"#;

    fn c(text: &str) -> CString {
        CString::new(text).unwrap()
    }

    fn last_error() -> String {
        let p = nl_last_error_message();
        assert!(!p.is_null(), "an error message should be set");
        let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
        unsafe { nl_string_free(p) };
        s
    }

    fn build_model() -> *mut NlModel {
        let mut model = std::ptr::null_mut();
        let status = unsafe { nl_model_from_json(c(MODEL_JSON).as_ptr(), &mut model) };
        assert_eq!(status, NlStatus::NlOk);
        assert!(!model.is_null());
        model
    }

    #[test]
    fn round_trip_simulate_serialize_and_fit() {
        let model = build_model();
        let mut dim = 0usize;
        assert_eq!(
            unsafe { nl_model_param_dim(model, &mut dim) },
            NlStatus::NlOk
        );
        assert_eq!(dim, 1);

        let theta_star = [1.2f64];
        let mut record = std::ptr::null_mut();
        let status = unsafe {
            nl_simulate(model, theta_star.as_ptr(), 1, 40, 3.0, 7, &mut record)
        };
        assert_eq!(status, NlStatus::NlOk);

        let mut events = 0usize;
        assert_eq!(
            unsafe { nl_record_event_count(record, &mut events) },
            NlStatus::NlOk
        );
        assert!(events > 50, "expected ~144 events, got {events}");

        // Constant family: the likelihood ratio has the closed form
        // K ln(theta / ref) - n t (theta - ref).
        let theta = [1.5f64];
        let theta_ref = [0.9f64];
        let mut loglr = f64::NAN;
        let status = unsafe {
            nl_log_likelihood_ratio(record, theta.as_ptr(), theta_ref.as_ptr(), 1, &mut loglr)
        };
        assert_eq!(status, NlStatus::NlOk);
        let k = events as f64;
        let expected = k * (1.5f64 / 0.9).ln() - 40.0 * 3.0 * (1.5 - 0.9);
        assert!((loglr - expected).abs() < 1e-9 * (1.0 + expected.abs()));

        let mut g = [f64::NAN];
        assert_eq!(
            unsafe { nl_score(record, theta.as_ptr(), 1, g.as_mut_ptr()) },
            NlStatus::NlOk
        );
        assert!((g[0] - (k / 1.5 - 120.0)).abs() < 1e-9 * (1.0 + g[0].abs()));

        // Wire format round trip preserves the record bit for bit.
        let mut jsonl = std::ptr::null_mut();
        assert_eq!(
            unsafe { nl_record_to_jsonl(record, &mut jsonl) },
            NlStatus::NlOk
        );
        let mut reloaded = std::ptr::null_mut();
        assert_eq!(
            unsafe { nl_record_from_jsonl(model, jsonl, &mut reloaded) },
            NlStatus::NlOk
        );
        let mut jsonl2 = std::ptr::null_mut();
        assert_eq!(
            unsafe { nl_record_to_jsonl(reloaded, &mut jsonl2) },
            NlStatus::NlOk
        );
        assert_eq!(unsafe { CStr::from_ptr(jsonl) }, unsafe {
            CStr::from_ptr(jsonl2)
        });

        // The constant-family maximizer is K / (n t), clamped to the box.
        let mut fit = std::ptr::null_mut();
        assert_eq!(
            unsafe { nl_fit(record, std::ptr::null(), &mut fit) },
            NlStatus::NlOk
        );
        let mut theta_hat = [f64::NAN];
        assert_eq!(
            unsafe { nl_fit_theta(fit, theta_hat.as_mut_ptr(), 1) },
            NlStatus::NlOk
        );
        let closed = (k / 120.0).clamp(0.2, 3.0);
        assert!((theta_hat[0] - closed).abs() < 1e-8);

        let mut summary = NlFitSummary {
            converged: 0,
            at_boundary: 0,
            iterations: 0,
            log_likelihood_ratio: f64::NAN,
            gradient_norm: f64::NAN,
        };
        assert_eq!(unsafe { nl_fit_summary(fit, &mut summary) }, NlStatus::NlOk);
        assert_eq!(summary.converged, 1);
        assert_eq!(summary.at_boundary, 0);
        assert!(summary.iterations >= 1);
        assert!(summary.log_likelihood_ratio.is_finite());

        unsafe {
            nl_string_free(jsonl);
            nl_string_free(jsonl2);
            nl_fit_free(fit);
            nl_record_free(reloaded);
            nl_record_free(record);
            nl_model_free(model);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        // Null arguments.
        let mut model = std::ptr::null_mut();
        assert_eq!(
            unsafe { nl_model_from_json(std::ptr::null(), &mut model) },
            NlStatus::NlNullPointer
        );
        assert!(last_error().contains("null"));

        // Malformed JSON points at the schema.
        let status = unsafe { nl_model_from_json(c("{\"drift\": 3}").as_ptr(), &mut model) };
        assert_eq!(status, NlStatus::NlConfig);
        assert!(last_error().contains("model schema error"));

        // Boundary parameters are rejected by the simulator.
        let model = build_model();
        let mut record = std::ptr::null_mut();
        let bad = [3.0f64];
        let status = unsafe { nl_simulate(model, bad.as_ptr(), 1, 5, 1.0, 1, &mut record) };
        assert_eq!(status, NlStatus::NlParamDomain);
        assert!(last_error().contains("strictly inside"));

        // Dimension mismatches are invalid input, not a crash.
        let theta_star = [1.0f64];
        let status = unsafe {
            nl_simulate(model, theta_star.as_ptr(), 1, 5, 1.0, 1, &mut record)
        };
        assert_eq!(status, NlStatus::NlOk);
        let mut fit = std::ptr::null_mut();
        assert_eq!(
            unsafe { nl_fit(record, std::ptr::null(), &mut fit) },
            NlStatus::NlOk
        );
        let mut buf = [0.0f64; 3];
        assert_eq!(
            unsafe { nl_fit_theta(fit, buf.as_mut_ptr(), 3) },
            NlStatus::NlInvalidInput
        );
        assert!(last_error().contains("dimension"));

        // Bad estimator options are a config error.
        let mut fit2 = std::ptr::null_mut();
        let status = unsafe { nl_fit(record, c("{\"max_iterations\": -1}").as_ptr(), &mut fit2) };
        assert_eq!(status, NlStatus::NlConfig);
        assert!(last_error().contains("estimator schema error"));

        unsafe {
            nl_fit_free(fit);
            nl_record_free(record);
            nl_model_free(model);
        }
    }

    #[test]
    fn seeds_reproduce_records_bit_for_bit() {
        let model = build_model();
        let theta_star = [0.8f64];
        let mut texts = Vec::new();
        for _ in 0..2 {
            let mut record = std::ptr::null_mut();
            assert_eq!(
                unsafe { nl_simulate(model, theta_star.as_ptr(), 1, 12, 2.0, 99, &mut record) },
                NlStatus::NlOk
            );
            let mut jsonl = std::ptr::null_mut();
            assert_eq!(
                unsafe { nl_record_to_jsonl(record, &mut jsonl) },
                NlStatus::NlOk
            );
            texts.push(unsafe { CStr::from_ptr(jsonl) }.to_owned());
            unsafe {
                nl_string_free(jsonl);
                nl_record_free(record);
            }
        }
        assert_eq!(texts[0], texts[1]);
        unsafe { nl_model_free(model) };
    }
}
