//! C ABI over `bohmvar`.
//!
//! States and operators are opaque heap handles released with the matching
//! `*_free` function. Every fallible call returns a [`BvStatus`]; the message
//! of the most recent failure on the calling thread is available from
//! [`bv_last_error`]. Strings returned by the library are freed with
//! [`bv_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bohmvar::cli::{run_scenario, to_json, ScenarioConfig};
use bohmvar::decomposition::decompose;
use bohmvar::fields::{guiding_velocity, weak_field};
use bohmvar::quadrature::IntegrationScheme;
use bohmvar::{parse_state, DiffOperator, Error, OperatorRequest, WaveFunction};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidString = 2,
    /// Malformed descriptor, unknown name or out-of-range parameter.
    Config = 3,
    AtNode = 4,
    Unsupported = 5,
    /// Dimension mismatch, non-finite values or other numerical failure.
    Numerical = 6,
    Divergence = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque wave-function handle.
pub struct BvState {
    inner: WaveFunction,
}

/// Opaque operator handle, bound to the state it was built for.
pub struct BvOperator {
    inner: DiffOperator,
}

/// Scalar part of a decomposition report.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BvDecomposition {
    pub mean: f64,
    pub var_q: f64,
    pub var_b: f64,
    pub q_term: f64,
    pub deficit: f64,
    pub residual: f64,
    pub tol_identity: f64,
    pub identity_holds: bool,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BvStatus {
    match e {
        e if e.is_config() => BvStatus::Config,
        Error::AtNode { .. } => BvStatus::AtNode,
        Error::Unsupported(_) => BvStatus::Unsupported,
        Error::Divergence { .. } => BvStatus::Divergence,
        Error::Io(_) => BvStatus::Io,
        _ => BvStatus::Numerical,
    }
}

struct Failure(BvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BvStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BvStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(BvStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(BvStatus::InvalidString, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn point<'a>(x: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if x.is_null() {
        return Err(null("x"));
    }
    Ok(std::slice::from_raw_parts(x, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(BvStatus::InvalidString, "output contains NUL".into()))
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a state from a descriptor such as `ho1d:n=2`.
///
/// # Safety
/// `descriptor` must be a NUL-terminated string and `out_state` writable.
#[no_mangle]
pub unsafe extern "C" fn bv_state_new(descriptor: *const c_char, out_state: *mut *mut BvState) -> BvStatus {
    guard(|| {
        let slot = out(out_state, "out")?;
        *slot = ptr::null_mut();
        let psi = parse_state(text(descriptor, "descriptor")?)?;
        *slot = Box::into_raw(Box::new(BvState { inner: psi }));
        Ok(())
    })
}

/// # Safety
/// `state` must come from [`bv_state_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bv_state_free(state: *mut BvState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Spatial dimension, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bv_state_dim(state: *const BvState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.dim())
}

/// Number of spinor components, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bv_state_components(state: *const BvState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.components())
}

/// Writes the components of ψ(x) as interleaved (re, im) pairs.
/// `out_len` must be at least `2 * components`.
///
/// # Safety
/// `x` must hold `len` doubles and `values` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bv_state_value(
    state: *const BvState,
    x: *const f64,
    len: usize,
    values: *mut f64,
    out_len: usize,
) -> BvStatus {
    guard(|| {
        let psi = &handle(state, "state")?.inner;
        let x = point(x, len)?;
        psi.check_dim(x)?;
        let v = psi.value(x);
        if out_len < 2 * v.len() {
            return Err(Failure(
                BvStatus::BufferTooSmall,
                format!("need {} doubles, got {out_len}", 2 * v.len()),
            ));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let dst = std::slice::from_raw_parts_mut(values, 2 * v.len());
        for (i, c) in v.iter().enumerate() {
            dst[2 * i] = c.re;
            dst[2 * i + 1] = c.im;
        }
        Ok(())
    })
}

/// Guidance velocity at `x`; writes `len` doubles to `velocity`.
///
/// # Safety
/// `x` and `velocity` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bv_guiding_velocity(
    state: *const BvState,
    x: *const f64,
    len: usize,
    velocity: *mut f64,
) -> BvStatus {
    guard(|| {
        let psi = &handle(state, "state")?.inner;
        let v = guiding_velocity(psi, point(x, len)?)?;
        if velocity.is_null() {
            return Err(null("velocity"));
        }
        std::slice::from_raw_parts_mut(velocity, v.len()).copy_from_slice(&v);
        Ok(())
    })
}

/// Builds an operator such as `momentum:axis=1` for `state`.
///
/// # Safety
/// `spec` must be NUL-terminated, `state` live and `out_op` writable.
#[no_mangle]
pub unsafe extern "C" fn bv_operator_new(
    spec: *const c_char,
    state: *const BvState,
    out_op: *mut *mut BvOperator,
) -> BvStatus {
    guard(|| {
        let slot = out(out_op, "out")?;
        *slot = ptr::null_mut();
        let psi = &handle(state, "state")?.inner;
        let op = OperatorRequest::parse(text(spec, "operator")?, psi.units())?.build_for(psi)?;
        *slot = Box::into_raw(Box::new(BvOperator { inner: op }));
        Ok(())
    })
}

/// # Safety
/// `op` must come from [`bv_operator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bv_operator_free(op: *mut BvOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Local weak value Re[ψ†Âψ]/|ψ|² at `x`.
///
/// # Safety
/// Handles must be live, `x` must hold `len` doubles, `value` writable.
#[no_mangle]
pub unsafe extern "C" fn bv_weak_value(
    op: *const BvOperator,
    state: *const BvState,
    x: *const f64,
    len: usize,
    value: *mut f64,
) -> BvStatus {
    guard(|| {
        let a = weak_field(&handle(op, "operator")?.inner, &handle(state, "state")?.inner, point(x, len)?)?;
        *out(value, "value")? = a;
        Ok(())
    })
}

fn run_decompose(op: &BvOperator, state: &BvState) -> Result<bohmvar::decomposition::DecompositionReport, Failure> {
    let r = decompose(&op.inner, &state.inner, &IntegrationScheme::default(), None)?;
    if r.method.divergent {
        return Err(Failure(
            BvStatus::Divergence,
            format!("ε-exclusion sequences diverge for {} in {}", r.operator, r.state),
        ));
    }
    Ok(r)
}

/// Variance decomposition with the default quadrature scheme.
///
/// # Safety
/// Handles must be live and `report` writable.
#[no_mangle]
pub unsafe extern "C" fn bv_decompose(
    op: *const BvOperator,
    state: *const BvState,
    report: *mut BvDecomposition,
) -> BvStatus {
    guard(|| {
        let r = run_decompose(handle(op, "operator")?, handle(state, "state")?)?;
        *out(report, "report")? = BvDecomposition {
            mean: r.mean,
            var_q: r.var_q,
            var_b: r.var_b,
            q_term: r.q_term,
            deficit: r.deficit,
            residual: r.residual,
            tol_identity: r.tol_identity,
            identity_holds: r.identity_holds,
            converged: r.method.converged,
        };
        Ok(())
    })
}

/// Full decomposition report as JSON; free with [`bv_string_free`].
///
/// # Safety
/// Handles must be live and `json` writable.
#[no_mangle]
pub unsafe extern "C" fn bv_decompose_json(
    op: *const BvOperator,
    state: *const BvState,
    json: *mut *mut c_char,
) -> BvStatus {
    guard(|| {
        let slot = out(json, "json")?;
        *slot = ptr::null_mut();
        let r = run_decompose(handle(op, "operator")?, handle(state, "state")?)?;
        *slot = owned_string(to_json(&r)?)?;
        Ok(())
    })
}

/// Runs a scenario from flat `key=value` text (the same keys as the
/// command-line tool) without writing files. Stores the report JSON in
/// `json` and the tool's exit code in `exit_code`; both are set even when
/// the scenario itself fails.
///
/// # Safety
/// `config` must be NUL-terminated; `json` and `exit_code` writable.
#[no_mangle]
pub unsafe extern "C" fn bv_run_config(
    config: *const c_char,
    json: *mut *mut c_char,
    exit_code: *mut i32,
) -> BvStatus {
    guard(|| {
        let slot = out(json, "json")?;
        *slot = ptr::null_mut();
        let code = out(exit_code, "exit_code")?;
        let mut cfg = ScenarioConfig::default();
        cfg.apply_text(text(config, "config")?)?;
        let o = run_scenario(&cfg);
        *code = o.exit_code;
        *slot = owned_string(to_json(&o.report)?)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn bv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
