//! C interface to `fiberlab`.
//!
//! Every function returns an [`FlStatus`]. On failure the message is kept in
//! a thread-local slot and can be copied out with [`fl_last_error`]. Objects
//! cross the boundary as opaque handles that the caller releases with the
//! matching `*_free` function. Panics are caught and reported as
//! [`FlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use fiberlab::catalog;
use fiberlab::cli::config::Config;
use fiberlab::fiber::FiberSystem;
use fiberlab::measure::{wk_norm, Atom, FiberSpace, FiniteSignedMeasure};
use fiberlab::statistics::{correlation_sequence, Observable};
use fiberlab::transfer::{bound_constants, invariant_measure, weak_norm, LeafwiseMeasure};
use fiberlab::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Config = 4,
    InsufficientDepth = 5,
    MemoryBound = 6,
    BufferTooSmall = 7,
    Engine = 8,
    Panic = 9,
}

/// Opaque fiber system.
pub struct FlSystem {
    inner: FiberSystem,
}

/// Opaque leafwise measure produced by [`fl_invariant_measure`].
pub struct FlLeafwise {
    inner: LeafwiseMeasure,
    residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

struct Failure(FlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InsufficientSymbols { .. } | Error::InvalidDepth(_) => FlStatus::InsufficientDepth,
            Error::MemoryBound { .. } => FlStatus::MemoryBound,
            Error::InvalidInput(_) | Error::InvalidResolution(_) | Error::InvalidSpace(_) => FlStatus::InvalidArgument,
            _ => FlStatus::Engine,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: FlStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            FlStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {text}"));
            FlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(FlStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(FlStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(FlStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(FlStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn observable(text: &str) -> Result<Observable, Failure> {
    Observable::parse(text).map_err(|e| Failure(FlStatus::InvalidArgument, e.to_string()))
}

/// Copies the message of the last failure on this thread into `buf` as a
/// NUL-terminated string and stores the full length (without the NUL) in
/// `needed`. Returns `BufferTooSmall` when the message was truncated.
/// `buf` may be null when `capacity` is zero.
///
/// # Safety
/// `buf` must point to `capacity` writable bytes and `needed` must be null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fl_last_error(buf: *mut c_char, capacity: usize, needed: *mut usize) -> FlStatus {
    let message = LAST_ERROR.with(|slot| slot.borrow().clone());
    if let Some(n) = needed.as_mut() {
        *n = message.len();
    }
    if capacity == 0 {
        return if message.is_empty() { FlStatus::Ok } else { FlStatus::BufferTooSmall };
    }
    if buf.is_null() {
        return FlStatus::NullPointer;
    }
    let take = message.len().min(capacity - 1);
    ptr::copy_nonoverlapping(message.as_ptr().cast::<c_char>(), buf, take);
    *buf.add(take) = 0;
    if take < message.len() { FlStatus::BufferTooSmall } else { FlStatus::Ok }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds one of the catalog systems by name (`dyadic`, `sequence_affine`,
/// `skewed_ifs`, `golden_cantor`, `finite_table`).
///
/// # Safety
/// `name` must be a valid C string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fl_system_catalog(name: *const c_char, out: *mut *mut FlSystem) -> FlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let name = str_arg(name, "name")?;
        let Some(inner) = catalog::by_name(name) else {
            return fail(FlStatus::NotFound, format!("no catalog system named {name:?}"));
        };
        *out = Box::into_raw(Box::new(FlSystem { inner }));
        Ok(())
    })
}

/// Builds a system from the text of a configuration file.
///
/// # Safety
/// `text` must be a valid C string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fl_system_from_config(text: *const c_char, out: *mut *mut FlSystem) -> FlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let config = Config::parse(text).map_err(|e| Failure(FlStatus::Config, e.to_string()))?;
        let inner = config.system().map_err(|e| Failure(FlStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(FlSystem { inner }));
        Ok(())
    })
}

/// Same as [`fl_system_from_config`] but reads the configuration from a file.
///
/// # Safety
/// `path` must be a valid C string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fl_system_from_config_file(path: *const c_char, out: *mut *mut FlSystem) -> FlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(Path::new(path))
            .map_err(|e| Failure(FlStatus::NotFound, format!("{path}: {e}")))?;
        let config = Config::parse(&text).map_err(|e| Failure(FlStatus::Config, e.to_string()))?;
        let inner = config.system().map_err(|e| Failure(FlStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(FlSystem { inner }));
        Ok(())
    })
}

/// Releases a system. Null is ignored.
///
/// # Safety
/// `sys` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_system_free(sys: *mut FlSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Scalar constants of a system.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlConstants {
    pub alphabet: usize,
    pub theta: f64,
    pub alpha: f64,
    pub h: f64,
    pub c1: f64,
    pub xi: f64,
    pub lip_bound: f64,
}

/// Fills `out` with the system constants, using `measured_r` as the basis
/// contraction rate.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fl_system_constants(sys: *const FlSystem, measured_r: f64, out: *mut FlConstants) -> FlStatus {
    guard(|| {
        let sys = &handle(sys, "sys")?.inner;
        let out = out_arg(out, "out")?;
        if !(0.0..1.0).contains(&measured_r) {
            return fail(FlStatus::InvalidArgument, format!("rate {measured_r} is outside [0, 1)"));
        }
        let b = bound_constants(sys, measured_r);
        *out = FlConstants {
            alphabet: b.n,
            theta: b.theta,
            alpha: b.alpha,
            h: b.h,
            c1: b.c1,
            xi: b.xi,
            lip_bound: b.lip_bound,
        };
        Ok(())
    })
}

fn start_measure(sys: &FiberSystem) -> Result<FiniteSignedMeasure, Failure> {
    let start = match sys.space().as_ref() {
        FiberSpace::Interval { lo, .. } => *lo,
        FiberSpace::Finite { .. } => 0.0,
    };
    Ok(FiniteSignedMeasure::dirac(sys.space().clone(), start)?)
}

/// Approximates the invariant measure at `depth` by iterating `steps`
/// transfer steps from a Dirac mass at the left end of the fiber, with
/// compression resolution `delta` (0 disables compression).
///
/// # Safety
/// `sys` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fl_invariant_measure(
    sys: *const FlSystem,
    depth: usize,
    steps: usize,
    delta: f64,
    out: *mut *mut FlLeafwise,
) -> FlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let sys = &handle(sys, "sys")?.inner;
        if delta.is_nan() || delta < 0.0 {
            return fail(FlStatus::InvalidArgument, format!("resolution {delta} must be non-negative"));
        }
        let run = invariant_measure(sys, depth, steps, delta, &start_measure(sys)?)?;
        *out = Box::into_raw(Box::new(FlLeafwise { inner: run.measure, residual: run.residual }));
        Ok(())
    })
}

/// Releases a leafwise measure. Null is ignored.
///
/// # Safety
/// `mu` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_leafwise_free(mu: *mut FlLeafwise) {
    if !mu.is_null() {
        drop(Box::from_raw(mu));
    }
}

/// Summary numbers of a leafwise measure.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlLeafwiseInfo {
    pub depth: usize,
    pub cylinders: usize,
    pub atoms: usize,
    pub global_mass: f64,
    pub weak_norm: f64,
    /// Weak distance between the measure and its image under one more
    /// transfer step.
    pub residual: f64,
}

/// # Safety
/// `mu` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fl_leafwise_info(mu: *const FlLeafwise, out: *mut FlLeafwiseInfo) -> FlStatus {
    guard(|| {
        let mu = handle(mu, "mu")?;
        let out = out_arg(out, "out")?;
        *out = FlLeafwiseInfo {
            depth: mu.inner.depth(),
            cylinders: mu.inner.len(),
            atoms: mu.inner.total_atoms(),
            global_mass: mu.inner.global_mass(),
            weak_norm: weak_norm(&mu.inner),
            residual: mu.residual,
        };
        Ok(())
    })
}

/// Integrates an observable (`one`, `z`, `z2`, `x0`, `x0*z`, ...) against
/// the measure.
///
/// # Safety
/// `mu` must be a live handle, `observable_name` a valid C string and `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fl_leafwise_integrate(
    mu: *const FlLeafwise,
    observable_name: *const c_char,
    out: *mut f64,
) -> FlStatus {
    guard(|| {
        let mu = handle(mu, "mu")?;
        let obs = observable(str_arg(observable_name, "observable")?)?;
        *out_arg(out, "out")? = fiberlab::statistics::integrate(&obs, &mu.inner);
        Ok(())
    })
}

/// Writes `|C_n|` for `n = 0..=n_max` into `values` (length `n_max + 1`).
/// The measure must have depth at least `n_max + 1`.
///
/// # Safety
/// Handles must be live, names valid C strings and `values` must hold
/// `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_correlations(
    sys: *const FlSystem,
    mu: *const FlLeafwise,
    f: *const c_char,
    g: *const c_char,
    n_max: usize,
    delta: f64,
    values: *mut f64,
    capacity: usize,
) -> FlStatus {
    guard(|| {
        let sys = &handle(sys, "sys")?.inner;
        let mu = &handle(mu, "mu")?.inner;
        let f = observable(str_arg(f, "f")?)?;
        let g = observable(str_arg(g, "g")?)?;
        if capacity < n_max + 1 {
            return fail(FlStatus::BufferTooSmall, format!("need room for {} values", n_max + 1));
        }
        if values.is_null() {
            return fail(FlStatus::NullPointer, "values is null");
        }
        if mu.spec().as_ref() != sys.spec().as_ref() {
            return fail(FlStatus::InvalidArgument, "measure belongs to another subshift");
        }
        let xi = bound_constants(sys, 0.0).xi;
        let report = correlation_sequence(sys, mu, &f, &g, n_max, delta, xi)?;
        let out = std::slice::from_raw_parts_mut(values, n_max + 1);
        out.copy_from_slice(&report.values);
        Ok(())
    })
}

fn interval_measure(space: &Arc<FiberSpace>, pos: &[f64], w: &[f64]) -> Result<Vec<Atom>, Failure> {
    let pairs: Vec<(f64, f64)> = pos.iter().copied().zip(w.iter().copied()).collect();
    Ok(FiniteSignedMeasure::from_pairs(space.clone(), &pairs)?.into_atoms())
}

/// Flat norm of the signed measure `Σ w_i δ_{pos_i}` on `[lo, hi]`.
///
/// # Safety
/// `pos` and `weights` must hold `len` doubles and `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn fl_wk_norm_interval(
    lo: f64,
    hi: f64,
    pos: *const f64,
    weights: *const f64,
    len: usize,
    out: *mut f64,
) -> FlStatus {
    guard(|| {
        let space = Arc::new(FiberSpace::interval(lo, hi)?);
        let atoms = interval_measure(
            &space,
            slice_arg(pos, len, "pos")?,
            slice_arg(weights, len, "weights")?,
        )?;
        *out_arg(out, "out")? = wk_norm(&space, &atoms);
        Ok(())
    })
}
