//! C ABI over the field estimators: opaque handles, integer status
//! codes, no panics across the boundary.
//!
//! Conventions: constructors return NULL on failure; fallible
//! operations return a [`GridlrvStatus`] and write results through out
//! pointers; [`gridlrv_last_error`] returns a thread-local message for
//! the most recent failure on the calling thread, valid until the next
//! failing call on that thread. Handles are not thread-safe; callers
//! synchronize shared use.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};

use gridlrv::{
    image_test, threshold_lrv, CutRule, Error, Field, KernelSpec, Reference, Result,
};

/// Status of a call; zero is success.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GridlrvStatus {
    Ok = 0,
    /// A parameter violates a precondition.
    InvalidParam = 1,
    /// Dimensions of the arguments do not line up.
    ShapeMismatch = 2,
    /// A lag leaves no site pairs inside the grid.
    ZeroOverlap = 3,
    /// A variance estimate came out negative where a square root is
    /// required.
    NegativeVariance = 4,
    /// A field file failed to parse.
    ParseError = 5,
    IoError = 6,
    NullPointer = 7,
    /// An internal invariant failed; the library state is still valid.
    Panic = 8,
}

/// Weight families of the lag-window estimator.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GridlrvKernel {
    Constant = 0,
    Bartlett = 1,
    TukeyHanning = 2,
    /// Uses the `bandwidth` argument.
    QuadraticSpectral = 3,
}

/// Hard-threshold rules applied to the sample autocovariances.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GridlrvCut {
    None = 0,
    /// Threshold |j|_2^alpha / (n_1 ... n_q) - delta.
    PowerL2 = 1,
    /// Threshold |j|_inf^alpha / (n_1 ... n_q) - delta.
    PowerMax = 2,
    /// Fixed threshold `cut_value`.
    Constant = 3,
}

/// Side information of an estimate.
#[repr(C)]
pub struct GridlrvEstimateInfo {
    /// Lags whose autocovariance entered the sum.
    pub kept_lags: usize,
    /// Nonzero when the truncation box grows too fast for the grid
    /// (cube of the largest entry at or above the smallest extent).
    pub rate_warning: c_int,
}

/// A stationary field on an integer grid (opaque).
pub struct GridlrvField(Field);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).expect("NULs removed");
    });
}

fn status_of(err: &Error) -> GridlrvStatus {
    match err {
        Error::InvalidParam(_) => GridlrvStatus::InvalidParam,
        Error::ShapeMismatch(_) => GridlrvStatus::ShapeMismatch,
        Error::ZeroOverlap { .. } => GridlrvStatus::ZeroOverlap,
        Error::NegativeVarianceEstimate(_) => GridlrvStatus::NegativeVariance,
        Error::Parse { .. } => GridlrvStatus::ParseError,
        Error::Io(_) => GridlrvStatus::IoError,
        Error::Block { source, .. } => status_of(source),
    }
}

fn fail(err: &Error) -> GridlrvStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Runs a fallible body with panics converted to a status.
fn guarded(body: impl FnOnce() -> GridlrvStatus) -> GridlrvStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            GridlrvStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread; empty string if
/// none. The pointer stays valid until the next failing call here.
#[no_mangle]
pub extern "C" fn gridlrv_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gridlrv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T]> {
    if ptr.is_null() {
        return Err(Error::invalid(format!("{what} pointer is NULL")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a str> {
    if ptr.is_null() {
        return Err(Error::invalid("path pointer is NULL"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Error::invalid("path is not valid UTF-8"))
}

fn boxed_field(result: Result<Field>) -> *mut GridlrvField {
    match result {
        Ok(f) => Box::into_raw(Box::new(GridlrvField(f))),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// Builds a field from a copy of `data`: `p` values per site, sites in
/// row-major order over `shape[0..q]`, `data_len = p * product(shape)`.
/// Returns NULL on failure (see [`gridlrv_last_error`]).
///
/// # Safety
/// `shape` must point to `q` readable elements and `data` to
/// `data_len` readable elements.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_field_create(
    q: usize,
    shape: *const usize,
    p: usize,
    data: *const f64,
    data_len: usize,
) -> *mut GridlrvField {
    match catch_unwind(AssertUnwindSafe(|| {
        let shape = slice_arg(shape, q, "shape")?;
        let data = slice_arg(data, data_len, "data")?;
        Field::from_parts(shape.to_vec(), p, data.to_vec())
    })) {
        Ok(result) => boxed_field(result),
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// Reads the CSV field format. Returns NULL on failure.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_field_read_csv(path: *const c_char) -> *mut GridlrvField {
    match catch_unwind(AssertUnwindSafe(|| -> Result<Field> {
        let path = path_arg(path)?;
        Field::read_csv(File::open(path)?)
    })) {
        Ok(result) => boxed_field(result),
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// Reads the binary field format. Returns NULL on failure.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_field_read_binary(path: *const c_char) -> *mut GridlrvField {
    match catch_unwind(AssertUnwindSafe(|| -> Result<Field> {
        let path = path_arg(path)?;
        Field::read_binary(File::open(path)?)
    })) {
        Ok(result) => boxed_field(result),
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// Releases a field handle; NULL is a no-op.
///
/// # Safety
/// `field` must come from a `gridlrv_field_*` constructor and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_field_free(field: *mut GridlrvField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Grid dimension, or 0 for NULL.
///
/// # Safety
/// `field` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_field_q(field: *const GridlrvField) -> usize {
    field.as_ref().map_or(0, |f| f.0.q())
}

/// Values per site, or 0 for NULL.
///
/// # Safety
/// `field` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_field_p(field: *const GridlrvField) -> usize {
    field.as_ref().map_or(0, |f| f.0.p())
}

/// Copies the grid extents into `out[0..len]`; `len` must equal the
/// grid dimension.
///
/// # Safety
/// `field` must be a live handle; `out` must hold `len` writable
/// elements.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_field_shape(
    field: *const GridlrvField,
    out: *mut usize,
    len: usize,
) -> GridlrvStatus {
    guarded(|| {
        let Some(f) = field.as_ref() else {
            set_error("field pointer is NULL");
            return GridlrvStatus::NullPointer;
        };
        if out.is_null() {
            set_error("out pointer is NULL");
            return GridlrvStatus::NullPointer;
        }
        if len != f.0.q() {
            return fail(&Error::ShapeMismatch(format!(
                "out length {len} must equal the grid dimension {}",
                f.0.q()
            )));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(f.0.shape());
        GridlrvStatus::Ok
    })
}

fn build_kernel(kernel: GridlrvKernel, bandwidth: f64) -> KernelSpec {
    match kernel {
        GridlrvKernel::Constant => KernelSpec::Constant,
        GridlrvKernel::Bartlett => KernelSpec::Bartlett,
        GridlrvKernel::TukeyHanning => KernelSpec::TukeyHanning,
        GridlrvKernel::QuadraticSpectral => KernelSpec::QuadraticSpectral {
            bandwidth_bw: bandwidth,
        },
    }
}

fn build_cut(cut: GridlrvCut, alpha: f64, delta: f64, cut_value: f64) -> CutRule {
    match cut {
        GridlrvCut::None => CutRule::None,
        GridlrvCut::PowerL2 => CutRule::PowerL2 { alpha, delta },
        GridlrvCut::PowerMax => CutRule::PowerMax { alpha, delta },
        GridlrvCut::Constant => CutRule::Constant { c: cut_value },
    }
}

/// Long-run variance estimate over the lag box `|j| <= m`, entries
/// kept only where they clear the threshold rule. Writes the p x p
/// matrix row-major into `sigma2_out[0..sigma2_len]` (`sigma2_len`
/// must be exactly p*p) and, when `info_out` is non-NULL, fills it.
///
/// # Safety
/// `field` must be a live handle; `m` must hold `m_len` readable
/// elements; `sigma2_out` must hold `sigma2_len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_estimate(
    field: *const GridlrvField,
    m: *const usize,
    m_len: usize,
    kernel: GridlrvKernel,
    bandwidth: f64,
    cut: GridlrvCut,
    alpha: f64,
    delta: f64,
    cut_value: f64,
    sigma2_out: *mut f64,
    sigma2_len: usize,
    info_out: *mut GridlrvEstimateInfo,
) -> GridlrvStatus {
    guarded(|| {
        let Some(f) = field.as_ref() else {
            set_error("field pointer is NULL");
            return GridlrvStatus::NullPointer;
        };
        if sigma2_out.is_null() {
            set_error("sigma2_out pointer is NULL");
            return GridlrvStatus::NullPointer;
        }
        let m = match slice_arg(m, m_len, "m") {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        let p = f.0.p();
        if sigma2_len != p * p {
            return fail(&Error::ShapeMismatch(format!(
                "sigma2_len {sigma2_len} must be p*p = {}",
                p * p
            )));
        }
        let rule = build_cut(cut, alpha, delta, cut_value);
        if let Err(e) = rule.validate() {
            return fail(&e);
        }
        match threshold_lrv(&f.0, m, build_kernel(kernel, bandwidth), rule) {
            Ok(est) => {
                std::slice::from_raw_parts_mut(sigma2_out, sigma2_len)
                    .copy_from_slice(est.sigma2.as_slice());
                if let Some(info) = info_out.as_mut() {
                    info.kept_lags = est.kept_lags;
                    info.rate_warning = est.rate_warning as c_int;
                }
                GridlrvStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Partial-sum significance test of a univariate field against the
/// constant reference `null_value`, at the given two-sided level. On
/// success writes the scaled statistic, estimated sigma, critical
/// value, and rejection flag (0 or 1).
///
/// # Safety
/// `field` must be a live handle; `m` must hold `m_len` readable
/// elements; the four out pointers must be writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn gridlrv_image_test(
    field: *const GridlrvField,
    null_value: f64,
    level: f64,
    m: *const usize,
    m_len: usize,
    kernel: GridlrvKernel,
    bandwidth: f64,
    cut: GridlrvCut,
    alpha: f64,
    delta: f64,
    cut_value: f64,
    statistic_out: *mut f64,
    sigma_hat_out: *mut f64,
    critical_out: *mut f64,
    reject_out: *mut c_int,
) -> GridlrvStatus {
    guarded(|| {
        let Some(f) = field.as_ref() else {
            set_error("field pointer is NULL");
            return GridlrvStatus::NullPointer;
        };
        let m = match slice_arg(m, m_len, "m") {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        let rule = build_cut(cut, alpha, delta, cut_value);
        if let Err(e) = rule.validate() {
            return fail(&e);
        }
        match image_test(
            &f.0,
            &Reference::Scalar(null_value),
            level,
            m,
            build_kernel(kernel, bandwidth),
            rule,
        ) {
            Ok(res) => {
                if let Some(out) = statistic_out.as_mut() {
                    *out = res.statistic;
                }
                if let Some(out) = sigma_hat_out.as_mut() {
                    *out = res.sigma_hat;
                }
                if let Some(out) = critical_out.as_mut() {
                    *out = res.critical;
                }
                if let Some(out) = reject_out.as_mut() {
                    *out = res.reject as c_int;
                }
                GridlrvStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
