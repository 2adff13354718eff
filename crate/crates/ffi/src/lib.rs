//! C ABI for the torusflow simulation library.
//!
//! Conventions:
//! - Opaque handles (`TfModel`, `TfPath`, `TfPartition`) are created and
//!   destroyed by this library; never dereference them from C.
//! - Every fallible function returns a `TfStatus`; `TF_OK` is 0. On error,
//!   `tf_last_error` returns a thread-local UTF-8 message.
//! - All panics are caught at the boundary and reported as
//!   `TF_ERR_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use torusflow::curve::{MaterialCurve, SeedCurve};
use torusflow::flow_model::{from_text, model_hash, to_text, FlowModel};
use torusflow::hyptime::{
    detect_hyperbolic_time, partition_curve, HypParams, PartitionParams, PartitionResult,
};
use torusflow::noise::NoisePath;
use torusflow::sde::{flow_map, top_lyapunov, LiftedPoint};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    /// Success.
    TfOk = 0,
    /// A required pointer argument was null.
    TfErrNull = 1,
    /// An argument was out of range or otherwise invalid.
    TfErrInvalid = 2,
    /// The computation itself failed (diverged, not found, ...).
    TfErrRuntime = 3,
    /// A panic was caught at the boundary; this is a bug.
    TfErrInternal = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Pointer to the thread-local message for the most recent error. Valid
/// until the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn tf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn guard<F: FnOnce() -> TfStatus>(f: F) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            TfStatus::TfErrInternal
        }
    }
}

/// Opaque flow model handle.
pub struct TfModel(FlowModel);
/// Opaque Brownian realization handle.
pub struct TfPath(NoisePath);
/// Opaque partition result handle.
pub struct TfPartition(PartitionResult);

// ------------------------------------------------------------------- model

/// Create the built-in default model. Free with `tf_model_free`.
#[no_mangle]
pub extern "C" fn tf_model_default(out: *mut *mut TfModel) -> TfStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return TfStatus::TfErrNull;
        }
        let m = Box::new(TfModel(FlowModel::default_model()));
        unsafe { *out = Box::into_raw(m) };
        TfStatus::TfOk
    })
}

/// Parse a model from its text representation.
#[no_mangle]
pub extern "C" fn tf_model_from_text(text: *const c_char, out: *mut *mut TfModel) -> TfStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            set_error("text or out is null");
            return TfStatus::TfErrNull;
        }
        let s = match unsafe { CStr::from_ptr(text) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("model text is not valid UTF-8");
                return TfStatus::TfErrInvalid;
            }
        };
        match from_text(s) {
            Ok(m) => {
                unsafe { *out = Box::into_raw(Box::new(TfModel(m))) };
                TfStatus::TfOk
            }
            Err(e) => {
                set_error(&e.to_string());
                TfStatus::TfErrInvalid
            }
        }
    })
}

/// Write the model's text representation into `buf` (NUL-terminated,
/// truncated to `len` bytes). Returns the required size including the NUL
/// through `needed` when non-null.
#[no_mangle]
pub extern "C" fn tf_model_to_text(
    model: *const TfModel,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> TfStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            set_error("model is null");
            return TfStatus::TfErrNull;
        };
        let text = to_text(&m.0);
        copy_string(&text, buf, len, needed)
    })
}

/// Hex SHA-256 of the model's canonical text (65 bytes incl. NUL).
#[no_mangle]
pub extern "C" fn tf_model_hash(
    model: *const TfModel,
    buf: *mut c_char,
    len: usize,
) -> TfStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            set_error("model is null");
            return TfStatus::TfErrNull;
        };
        copy_string(&model_hash(&m.0), buf, len, std::ptr::null_mut())
    })
}

/// Number of independent Brownian components the model is driven by.
#[no_mangle]
pub extern "C" fn tf_model_dim(model: *const TfModel, out: *mut usize) -> TfStatus {
    guard(|| {
        let (Some(m), false) = (unsafe { model.as_ref() }, out.is_null()) else {
            set_error("model or out is null");
            return TfStatus::TfErrNull;
        };
        unsafe { *out = m.0.d() };
        TfStatus::TfOk
    })
}

#[no_mangle]
pub extern "C" fn tf_model_free(model: *mut TfModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

fn copy_string(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> TfStatus {
    let bytes = s.as_bytes();
    if !needed.is_null() {
        unsafe { *needed = bytes.len() + 1 };
    }
    if buf.is_null() {
        return TfStatus::TfOk;
    }
    if len == 0 {
        set_error("buffer length is zero");
        return TfStatus::TfErrInvalid;
    }
    let n = bytes.len().min(len - 1);
    unsafe {
        std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
        *buf.add(n) = 0;
    }
    TfStatus::TfOk
}

// -------------------------------------------------------------------- path

/// Sample a seeded Brownian realization: `dim` components over `[0,
/// horizon]` on the given base step. Free with `tf_path_free`.
#[no_mangle]
pub extern "C" fn tf_path_sample(
    seed: u64,
    dim: usize,
    horizon: f64,
    base_step: f64,
    out: *mut *mut TfPath,
) -> TfStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return TfStatus::TfErrNull;
        }
        if !(horizon > 0.0) || !(base_step > 0.0) || dim == 0 {
            set_error("horizon, base_step must be positive and dim nonzero");
            return TfStatus::TfErrInvalid;
        }
        let p = NoisePath::sample(seed, dim, horizon, base_step);
        unsafe { *out = Box::into_raw(Box::new(TfPath(p))) };
        TfStatus::TfOk
    })
}

#[no_mangle]
pub extern "C" fn tf_path_free(path: *mut TfPath) {
    if !path.is_null() {
        drop(unsafe { Box::from_raw(path) });
    }
}

// --------------------------------------------------------------- transport

/// Advect the point `(x, y)` from time `t0` to `t1` under the realization;
/// writes the lifted (unwrapped) end position into `out_xy[2]`.
#[no_mangle]
pub extern "C" fn tf_flow_map(
    model: *const TfModel,
    path: *const TfPath,
    x: f64,
    y: f64,
    t0: f64,
    t1: f64,
    out_xy: *mut f64,
) -> TfStatus {
    guard(|| {
        let (Some(m), Some(p)) = (unsafe { model.as_ref() }, unsafe { path.as_ref() }) else {
            set_error("model or path is null");
            return TfStatus::TfErrNull;
        };
        if out_xy.is_null() {
            set_error("out_xy is null");
            return TfStatus::TfErrNull;
        }
        let mut pt = [LiftedPoint::new([x, y])];
        match flow_map(&m.0, &mut pt, &p.0, t0, t1) {
            Ok(()) => {
                let q = pt[0].position();
                unsafe {
                    *out_xy = q[0];
                    *out_xy.add(1) = q[1];
                }
                TfStatus::TfOk
            }
            Err(e) => {
                set_error(&e.to_string());
                TfStatus::TfErrRuntime
            }
        }
    })
}

/// Top Lyapunov exponent estimate; writes the estimate and its standard
/// error.
#[no_mangle]
pub extern "C" fn tf_top_lyapunov(
    model: *const TfModel,
    seed: u64,
    t_total: f64,
    h: f64,
    renorm_interval: f64,
    out_lambda: *mut f64,
    out_stderr: *mut f64,
) -> TfStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            set_error("model is null");
            return TfStatus::TfErrNull;
        };
        if out_lambda.is_null() || out_stderr.is_null() {
            set_error("out_lambda or out_stderr is null");
            return TfStatus::TfErrNull;
        }
        match top_lyapunov(&m.0, seed, t_total, h, renorm_interval) {
            Ok(e) => {
                unsafe {
                    *out_lambda = e.lambda;
                    *out_stderr = e.stderr;
                }
                TfStatus::TfOk
            }
            Err(e) => {
                set_error(&e.to_string());
                TfStatus::TfErrRuntime
            }
        }
    })
}

/// Detect a hyperbolic stopping time for the midpoint of the straight
/// segment `(ax,ay)-(bx,by)` with default stopping parameters; writes the
/// stopping time. `TF_ERR_RUNTIME` when none is found within the horizon.
#[no_mangle]
pub extern "C" fn tf_detect_hyperbolic_time(
    model: *const TfModel,
    path: *const TfPath,
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    out_tau: *mut f64,
) -> TfStatus {
    guard(|| {
        let (Some(m), Some(p)) = (unsafe { model.as_ref() }, unsafe { path.as_ref() }) else {
            set_error("model or path is null");
            return TfStatus::TfErrNull;
        };
        if out_tau.is_null() {
            set_error("out_tau is null");
            return TfStatus::TfErrNull;
        }
        let curve = MaterialCurve::new(
            SeedCurve::Segment {
                a: [ax, ay],
                b: [bx, by],
            },
            64,
            true,
        );
        match detect_hyperbolic_time(&m.0, &curve, 0.5, &p.0, &HypParams::default()) {
            Ok(ev) => {
                unsafe { *out_tau = ev.tau };
                TfStatus::TfOk
            }
            Err(e) => {
                set_error(&e.to_string());
                TfStatus::TfErrRuntime
            }
        }
    })
}

// ------------------------------------------------------------------ partition

/// Partition the straight segment `(ax,ay)-(bx,by)` into stopping-time
/// pieces under the realization with default partition parameters. Free the
/// result with `tf_partition_free`.
#[no_mangle]
pub extern "C" fn tf_partition_segment(
    model: *const TfModel,
    path: *const TfPath,
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    out: *mut *mut TfPartition,
) -> TfStatus {
    guard(|| {
        let (Some(m), Some(p)) = (unsafe { model.as_ref() }, unsafe { path.as_ref() }) else {
            set_error("model or path is null");
            return TfStatus::TfErrNull;
        };
        if out.is_null() {
            set_error("out is null");
            return TfStatus::TfErrNull;
        }
        let curve = MaterialCurve::new(
            SeedCurve::Segment {
                a: [ax, ay],
                b: [bx, by],
            },
            64,
            true,
        );
        match partition_curve(&m.0, &curve, &p.0, &PartitionParams::default()) {
            Ok(res) => {
                unsafe { *out = Box::into_raw(Box::new(TfPartition(res))) };
                TfStatus::TfOk
            }
            Err(e) => {
                set_error(&e.to_string());
                TfStatus::TfErrRuntime
            }
        }
    })
}

/// Number of pieces in a partition result.
#[no_mangle]
pub extern "C" fn tf_partition_len(part: *const TfPartition, out: *mut usize) -> TfStatus {
    guard(|| {
        let (Some(p), false) = (unsafe { part.as_ref() }, out.is_null()) else {
            set_error("part or out is null");
            return TfStatus::TfErrNull;
        };
        unsafe { *out = p.0.pieces.len() };
        TfStatus::TfOk
    })
}

/// Fraction of the material measure covered by the pieces.
#[no_mangle]
pub extern "C" fn tf_partition_coverage(part: *const TfPartition, out: *mut f64) -> TfStatus {
    guard(|| {
        let (Some(p), false) = (unsafe { part.as_ref() }, out.is_null()) else {
            set_error("part or out is null");
            return TfStatus::TfErrNull;
        };
        unsafe { *out = p.0.coverage };
        TfStatus::TfOk
    })
}

/// Fetch piece `i`: material interval, stopping time (blocks), and image
/// length at the stopping time.
#[no_mangle]
pub extern "C" fn tf_partition_piece(
    part: *const TfPartition,
    i: usize,
    out_s_lo: *mut f64,
    out_s_hi: *mut f64,
    out_n_j: *mut u32,
    out_image_length: *mut f64,
) -> TfStatus {
    guard(|| {
        let Some(p) = (unsafe { part.as_ref() }) else {
            set_error("part is null");
            return TfStatus::TfErrNull;
        };
        let Some(piece) = p.0.pieces.get(i) else {
            set_error("piece index out of range");
            return TfStatus::TfErrInvalid;
        };
        for (ptr, v) in [
            (out_s_lo, piece.s_lo),
            (out_s_hi, piece.s_hi),
            (out_image_length, piece.image_length),
        ] {
            if !ptr.is_null() {
                unsafe { *ptr = v };
            }
        }
        if !out_n_j.is_null() {
            unsafe { *out_n_j = piece.n_j };
        }
        TfStatus::TfOk
    })
}

#[no_mangle]
pub extern "C" fn tf_partition_free(part: *mut TfPartition) {
    if !part.is_null() {
        drop(unsafe { Box::from_raw(part) });
    }
}
