//! C ABI over `logfactor`.
//!
//! Every fallible function returns an [`LfStatus`] and writes its result
//! through an out-pointer only on success; `lf_factor` also fills its result
//! for `NOTHING_TO_DO` and `PROTOCOL_FAILURE`. The message of the most recent
//! failure on the calling thread is available from [`lf_last_error_message`].
//! Systems are opaque handles owned by the caller and released with
//! [`lf_system_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use logfactor::interaction::w_ground_to;
use logfactor::limits::{max_semiprime, LimitInputs};
use logfactor::protocol::{self, prepare, resonance_margin, Preparation, System, SystemConfig};
use logfactor::spectrum;
use logfactor::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotConverged = 3,
    ProtocolFailure = 4,
    Truncation = 5,
    /// Trial division left nothing to drive; the result holds no factors.
    NothingToDo = 6,
    Internal = 7,
    Panic = 8,
}

/// Opaque potential and single-particle basis.
pub struct LfSystem {
    inner: System,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LfFactorResult {
    /// Larger factor, or 0 when none was found.
    pub p: u64,
    pub q: u64,
    /// The number actually driven after trial division.
    pub n: u64,
    pub attempts: u32,
    pub omega: f64,
    pub t_window: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> LfStatus {
    match e {
        Error::Parameter(_) | Error::DomainTruncation(_) | Error::ProtocolDomain(_) => LfStatus::InvalidArgument,
        Error::NotConverged { .. } => LfStatus::NotConverged,
        Error::Truncation(_) => LfStatus::Truncation,
        Error::Decode { .. } | Error::Inconsistent { .. } | Error::Stiffness { .. } => LfStatus::ProtocolFailure,
        _ => LfStatus::Internal,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (LfStatus, String)>) -> LfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LfStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside logfactor");
            LfStatus::Panic
        }
    }
}

fn lift<T>(r: logfactor::Result<T>) -> Result<T, (LfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (LfStatus, String) {
    (LfStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `out` must be null or valid for writing one `T`.
unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), (LfStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    unsafe { out.write(value) };
    Ok(())
}

/// # Safety
/// `system` must be null or a live handle from [`lf_system_build`].
unsafe fn borrow<'a>(system: *const LfSystem) -> Result<&'a LfSystem, (LfStatus, String)> {
    unsafe { system.as_ref() }.ok_or_else(|| null("system"))
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn lf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `ln(k/L + 1)`.
///
/// # Safety
/// `out` must be valid for writing one `double`.
#[no_mangle]
pub unsafe extern "C" fn lf_level_1d(k: u32, l: u32, out: *mut f64) -> LfStatus {
    guard(|| unsafe { write_out(out, lift(spectrum::level_1d(k, l))?) })
}

/// `ln(j/K + 1)`.
///
/// # Safety
/// `out` must be valid for writing one `double`.
#[no_mangle]
pub unsafe extern "C" fn lf_level_3d(j: u32, k: u32, out: *mut f64) -> LfStatus {
    guard(|| unsafe { write_out(out, lift(spectrum::level_3d(j, k))?) })
}

/// `ln(1 + 1/N)`, the detuning floor of the protocol.
///
/// # Safety
/// `out` must be valid for writing one `double`.
#[no_mangle]
pub unsafe extern "C" fn lf_resonance_margin(n: u64, out: *mut f64) -> LfStatus {
    guard(|| {
        if n < 2 {
            return Err((LfStatus::InvalidArgument, format!("N must be at least 2, got {n}")));
        }
        unsafe { write_out(out, resonance_margin(n, 0)) }
    })
}

/// `min((gamma T)^2, (1/gamma)^2)`.
///
/// # Safety
/// `out` must be valid for writing one `double`.
#[no_mangle]
pub unsafe extern "C" fn lf_max_semiprime(gamma: f64, t_dec: f64, out: *mut f64) -> LfStatus {
    guard(|| {
        let inputs = lift(LimitInputs::new(gamma, t_dec))?;
        unsafe { write_out(out, max_semiprime(&inputs)) }
    })
}

/// Builds the potential for `l` fitted to `m_fit` levels and its s-wave basis.
/// On success `*out` owns a handle to release with [`lf_system_free`].
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn lf_system_build(l: u32, m_fit: usize, out: *mut *mut LfSystem) -> LfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let inner = lift(System::build(&SystemConfig::new(l, m_fit)))?;
        unsafe { out.write(Box::into_raw(Box::new(LfSystem { inner }))) };
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `system` must be null or a handle from [`lf_system_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lf_system_free(system: *mut LfSystem) {
    if !system.is_null() {
        drop(unsafe { Box::from_raw(system) });
    }
}

/// Number of s-states held by the system.
///
/// # Safety
/// `system` must be a live handle; `out` valid for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn lf_system_s_count(system: *const LfSystem, out: *mut usize) -> LfStatus {
    guard(|| {
        let s = unsafe { borrow(system)? };
        unsafe { write_out(out, s.inner.basis().s_count()) }
    })
}

/// Energy of s-state `j`.
///
/// # Safety
/// `system` must be a live handle; `out` valid for one `double`.
#[no_mangle]
pub unsafe extern "C" fn lf_system_s_energy(system: *const LfSystem, j: usize, out: *mut f64) -> LfStatus {
    guard(|| {
        let s = unsafe { borrow(system)? };
        let e = s.inner.basis().s_energies().get(j).copied().ok_or_else(|| {
            (LfStatus::InvalidArgument, format!("s-state {j} is beyond the {} held", s.inner.basis().s_count()))
        })?;
        unsafe { write_out(out, e) }
    })
}

/// Contact matrix element between the ground pair and the s-pair `(k1, k2)`.
///
/// # Safety
/// `system` must be a live handle; `out` valid for one `double`.
#[no_mangle]
pub unsafe extern "C" fn lf_system_w_ground_to(
    system: *const LfSystem,
    k1: usize,
    k2: usize,
    out: *mut f64,
) -> LfStatus {
    guard(|| {
        let s = unsafe { borrow(system)? };
        let w = lift(w_ground_to(k1, k2, 0, s.inner.basis()))?;
        unsafe { write_out(out, w) }
    })
}

/// Runs the protocol on `n` in the rotating-wave model.
///
/// # Safety
/// `system` must be a live handle; `out` valid for one `LfFactorResult`.
#[no_mangle]
pub unsafe extern "C" fn lf_factor(system: *const LfSystem, n: u64, seed: u64, out: *mut LfFactorResult) -> LfStatus {
    let mut nothing = None;
    let status = guard(|| {
        let s = unsafe { borrow(system)? };
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let config = match lift(prepare(n, s.inner.l()))? {
            Preparation::Ready(c) => c.with_seed(seed),
            Preparation::NothingToDo { remainder, reason, .. } => {
                unsafe { out.write(LfFactorResult { n: remainder, ..LfFactorResult::default() }) };
                nothing = Some(reason);
                return Ok(());
            }
        };
        let r = lift(protocol::run(&config, &s.inner))?;
        let (p, q) = r.factors.unwrap_or((0, 0));
        unsafe {
            out.write(LfFactorResult { p, q, n: r.n, attempts: r.attempts, omega: r.omega, t_window: r.t_window })
        };
        match r.failure {
            Some(f) => Err((LfStatus::ProtocolFailure, f)),
            None => Ok(()),
        }
    });
    match nothing {
        Some(reason) if status == LfStatus::Ok => {
            set_error(reason);
            LfStatus::NothingToDo
        }
        _ => status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn errors_set_the_thread_message() {
        let mut v = 0.0;
        assert_eq!(unsafe { lf_level_1d(1, 4, &mut v) }, LfStatus::InvalidArgument);
        let msg = unsafe { CStr::from_ptr(lf_last_error_message()) }.to_str().unwrap();
        assert!(msg.contains("odd"), "{msg}");
        assert_eq!(unsafe { lf_level_1d(1, 3, &mut v) }, LfStatus::Ok);
        assert!(lf_last_error_message().is_null());
        assert!((v - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn null_outputs_are_reported() {
        assert_eq!(unsafe { lf_level_3d(1, 2, ptr::null_mut()) }, LfStatus::NullPointer);
        assert_eq!(unsafe { lf_system_s_count(ptr::null(), &mut 0) }, LfStatus::NullPointer);
        unsafe { lf_system_free(ptr::null_mut()) };
    }

    #[test]
    fn version_is_terminated() {
        let v = unsafe { CStr::from_ptr(lf_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
