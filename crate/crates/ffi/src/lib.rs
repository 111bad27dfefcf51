//! C ABI over the `amid` crate.
//!
//! Every function returns an [`AmidStatus`]; results go through out-pointers.
//! Distributions are passed as opaque [`AmidCategorical`] handles that must be
//! released with [`amid_categorical_free`]. The message for the most recent
//! failure on the calling thread is available from [`amid_last_error`].
//! Panics never cross the boundary; they surface as `AMID_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::slice;

use amid::divergence::{Divergence, FGenerator};
use amid::fmean::generalized_f_mean;
use amid::grad::{amid_grad_analytic, amid_loss as loss, Direction, StudentLogits};
use amid::mixture::{alpha_mixture, AlphaLambda};
use amid::simplex::{normalize, LogCategorical};
use amid::Error;

/// Outcome of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LengthMismatch = 3,
    /// The divergence is infinite; the out-value is set to +inf.
    SupportViolation = 4,
    EmptySupport = 5,
    Numerical = 6,
    Panic = 7,
}

/// Loss measured against the teacher.
pub const AMID_DIRECTION_TEACHER: i32 = 0;
/// Loss measured against the student.
pub const AMID_DIRECTION_STUDENT: i32 = 1;

/// Opaque categorical distribution.
pub struct AmidCategorical(LogCategorical);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|cell| *cell.borrow_mut() = text);
}

fn status_of(e: &Error) -> AmidStatus {
    match e {
        Error::LengthMismatch { .. } => AmidStatus::LengthMismatch,
        Error::SupportViolation { .. } => AmidStatus::SupportViolation,
        Error::EmptySupport => AmidStatus::EmptySupport,
        Error::IndeterminateWeight { .. } | Error::NonFiniteLoss | Error::DivergedLoss { .. } => AmidStatus::Numerical,
        _ => AmidStatus::InvalidArgument,
    }
}

struct Failure(AmidStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AmidStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Failure> + UnwindSafe>(body: F) -> AmidStatus {
    match catch_unwind(body) {
        Ok(Ok(())) => {
            set_last_error("");
            AmidStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("panic inside amid");
            AmidStatus::Panic
        }
    }
}

unsafe fn doubles<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn doubles_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a>(ptr: *const AmidCategorical, what: &str) -> Result<&'a LogCategorical, Failure> {
    ptr.as_ref().map(|h| &h.0).ok_or_else(|| null(what))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure(AmidStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed(dist: LogCategorical) -> *mut AmidCategorical {
    Box::into_raw(Box::new(AmidCategorical(dist)))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn amid_status_string(status: AmidStatus) -> *const c_char {
    let s: &'static CStr = match status {
        AmidStatus::Ok => c"ok",
        AmidStatus::NullPointer => c"null pointer argument",
        AmidStatus::InvalidArgument => c"invalid argument",
        AmidStatus::LengthMismatch => c"length mismatch",
        AmidStatus::SupportViolation => c"support violation (infinite divergence)",
        AmidStatus::EmptySupport => c"empty support",
        AmidStatus::Numerical => c"numerical failure",
        AmidStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `amid_*` call on the same thread.
#[no_mangle]
pub extern "C" fn amid_last_error() -> *const c_char {
    LAST_ERROR.with(|cell| cell.borrow().as_ptr())
}

/// Builds a distribution from `len` non-negative weights (normalized).
///
/// # Safety
/// `probs` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amid_categorical_from_probs(
    probs: *const f64,
    len: usize,
    out: *mut *mut AmidCategorical,
) -> AmidStatus {
    guard(|| {
        let dist = LogCategorical::from_probs(doubles(probs, len, "probs")?)?;
        write(out, boxed(dist), "out")
    })
}

/// Builds `softmax(logits)`.
///
/// # Safety
/// `logits` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amid_categorical_from_logits(
    logits: *const f64,
    len: usize,
    out: *mut *mut AmidCategorical,
) -> AmidStatus {
    guard(|| {
        let dist = normalize(doubles(logits, len, "logits")?)?;
        write(out, boxed(dist), "out")
    })
}

/// Number of outcomes.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amid_categorical_len(dist: *const AmidCategorical, out: *mut usize) -> AmidStatus {
    guard(|| write(out, handle(dist, "dist")?.len(), "out"))
}

/// Copies the probabilities into `out`, which must hold exactly `len` entries.
///
/// # Safety
/// `dist` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn amid_categorical_probs(dist: *const AmidCategorical, out: *mut f64, len: usize) -> AmidStatus {
    guard(|| {
        let d = handle(dist, "dist")?;
        if d.len() != len {
            return Err(Error::LengthMismatch { left: d.len(), right: len }.into());
        }
        doubles_mut(out, len, "out")?.copy_from_slice(&d.probs());
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `dist` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn amid_categorical_free(dist: *mut AmidCategorical) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Builds the alpha-mixture of `p` and `q` into a new handle, with `ln Z` in `out_log_z`.
///
/// # Safety
/// `p`, `q` must be live handles; `out_r` and `out_log_z` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amid_alpha_mixture(
    p: *const AmidCategorical,
    q: *const AmidCategorical,
    alpha: f64,
    lambda: f64,
    out_r: *mut *mut AmidCategorical,
    out_log_z: *mut f64,
) -> AmidStatus {
    guard(|| {
        let (p, q) = (handle(p, "p")?, handle(q, "q")?);
        if out_r.is_null() || out_log_z.is_null() {
            return Err(null("output"));
        }
        let result = alpha_mixture(p, q, AlphaLambda::new(alpha, lambda)?)?;
        write(out_log_z, result.log_z, "out_log_z")?;
        write(out_r, boxed(result.r), "out_r")
    })
}

/// Evaluates a named divergence (`kl`, `rkl`, `jeffreys`, `skl:0.1`, `gjs`,
/// `alpha:0.5`, `ab:0.2,0.7`, ...). On a support violation `out` is +inf.
///
/// # Safety
/// `name` must be a NUL-terminated string; `p`, `q` live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amid_divergence(
    name: *const c_char,
    p: *const AmidCategorical,
    q: *const AmidCategorical,
    out: *mut f64,
) -> AmidStatus {
    guard(|| {
        let div: Divergence = text(name, "name")?.parse()?;
        let (p, q) = (handle(p, "p")?, handle(q, "q")?);
        if out.is_null() {
            return Err(null("out"));
        }
        match div.eval(p, q) {
            Ok(v) => write(out, v, "out"),
            Err(e) => {
                if e.is_support_violation() {
                    write(out, f64::INFINITY, "out")?;
                }
                Err(e.into())
            }
        }
    })
}

fn direction(code: i32) -> Result<Direction, Failure> {
    match code {
        AMID_DIRECTION_TEACHER => Ok(Direction::TeacherSide),
        AMID_DIRECTION_STUDENT => Ok(Direction::StudentSide),
        other => Err(Failure(AmidStatus::InvalidArgument, format!("unknown direction {other}"))),
    }
}

fn generator(name: &str) -> Result<FGenerator, Failure> {
    FGenerator::by_name(name).ok_or_else(|| Failure(AmidStatus::InvalidArgument, format!("unknown generator {name:?}")))
}

/// AMiD loss of the student `softmax(theta)` against teacher `p`.
/// `gen` is `kl`, `rkl` or `jeffreys`; `dir` is an `AMID_DIRECTION_*` value.
///
/// # Safety
/// `p` must be a live handle, `theta` must hold `len` doubles, `gen` must be
/// NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amid_loss(
    p: *const AmidCategorical,
    theta: *const f64,
    len: usize,
    alpha: f64,
    lambda: f64,
    gen: *const c_char,
    dir: i32,
    out: *mut f64,
) -> AmidStatus {
    guard(|| {
        let p = handle(p, "p")?;
        let theta = StudentLogits::new(doubles(theta, len, "theta")?.to_vec())?;
        let gen = generator(text(gen, "gen")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let value = loss(p, &theta, AlphaLambda::new(alpha, lambda)?, &gen, direction(dir)?);
        match value {
            Ok(v) => write(out, v, "out"),
            Err(e) => {
                if e.is_support_violation() {
                    write(out, f64::INFINITY, "out")?;
                }
                Err(e.into())
            }
        }
    })
}

/// Analytic teacher-side gradient of the AMiD loss with respect to `theta`,
/// written into `out_grad` (`len` entries).
///
/// # Safety
/// `p` must be a live handle; `theta` and `out_grad` must hold `len` doubles;
/// `gen` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn amid_grad(
    p: *const AmidCategorical,
    theta: *const f64,
    len: usize,
    alpha: f64,
    lambda: f64,
    gen: *const c_char,
    out_grad: *mut f64,
) -> AmidStatus {
    guard(|| {
        let p = handle(p, "p")?;
        let theta = StudentLogits::new(doubles(theta, len, "theta")?.to_vec())?;
        let gen = generator(text(gen, "gen")?)?;
        let out = doubles_mut(out_grad, len, "out_grad")?;
        let grad = amid_grad_analytic(p, &theta, AlphaLambda::new(alpha, lambda)?, &gen)?;
        out.copy_from_slice(&grad);
        Ok(())
    })
}

/// Weighted power mean `f_alpha^-1(sum w_i f_alpha(u_i))` of positive inputs.
///
/// # Safety
/// `weights` and `inputs` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amid_f_mean(
    weights: *const f64,
    inputs: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> AmidStatus {
    guard(|| {
        let m = generalized_f_mean(doubles(weights, len, "weights")?, doubles(inputs, len, "inputs")?, alpha)?;
        write(out, m, "out")
    })
}
