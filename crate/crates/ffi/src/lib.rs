//! C ABI over `subspace-sketch`.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every fallible call returns an [`SsStatus`]; on failure the message is
//! available from [`ss_last_error_message`] on the same thread until the
//! next failing call. Panics are caught at the boundary and reported as
//! `SS_STATUS_PANIC`.
//!
//! Matrices cross the boundary as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use subspace_sketch::estimator::{projected_affinity_estimate, projected_distance_estimate};
use subspace_sketch::io::{load_matrix, save_matrix};
use subspace_sketch::sketch::{apply, gaussian_operator, SketchOperator};
use subspace_sketch::subspace::{generate_pair_with_angles, generate_random_subspace, make_subspace, principal_angles};
use subspace_sketch::{Error, Matrix, Subspace};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    DimensionMismatch = 4,
    DegenerateSketch = 5,
    Calibration = 6,
    RankDeficient = 7,
    DegenerateGeometry = 8,
    NoConvergence = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 99,
}

impl From<&Error> for SsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => SsStatus::InvalidInput,
            Error::DimensionMismatch(_) => SsStatus::DimensionMismatch,
            Error::RankDeficient { .. } => SsStatus::RankDeficient,
            Error::DegenerateGeometry(_) => SsStatus::DegenerateGeometry,
            Error::DegenerateSketch { .. } => SsStatus::DegenerateSketch,
            Error::NoConvergence { .. } => SsStatus::NoConvergence,
            Error::Calibration(_) | Error::CalibrationMismatch(_) => SsStatus::Calibration,
            Error::Parse(_) => SsStatus::Parse,
            Error::Io(_) => SsStatus::Io,
        }
    }
}

/// Dense row-major matrix.
pub struct SsMatrix(Matrix);

/// Subspace held by an orthonormal basis.
pub struct SsSubspace(Subspace);

/// Gaussian sketch operator.
pub struct SsSketchOperator(SketchOperator);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(SsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(SsStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SsStatus::InvalidInput, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_new(rows: usize, cols: usize, data: *const f64, out: *mut *mut SsMatrix) -> SsStatus {
    guard(|| {
        let len = rows.checked_mul(cols).ok_or_else(|| Fail(SsStatus::InvalidInput, "shape overflows".into()))?;
        let values = slice(data, len, "data")?.to_vec();
        put(out, SsMatrix(Matrix::new(rows, cols, values)?))
    })
}

/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_rows(m: *const SsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_cols(m: *const SsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the entries row-major into `out`, which holds `capacity` doubles.
///
/// # Safety
/// `out` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_copy_data(m: *const SsMatrix, out: *mut f64, capacity: usize) -> SsStatus {
    guard(|| {
        let data = as_ref(m, "matrix")?.0.data();
        if capacity < data.len() {
            return Err(Fail(SsStatus::BufferTooSmall, format!("need {} doubles, have {capacity}", data.len())));
        }
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
        Ok(())
    })
}

/// Reads an SSKM or CSV matrix file.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_load(file: *const c_char, out: *mut *mut SsMatrix) -> SsStatus {
    guard(|| put(out, SsMatrix(load_matrix(path(file)?)?)))
}

/// Writes SSKM, or CSV when the name ends in `.csv`.
///
/// # Safety
/// `m` must be live; `file` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_save(m: *const SsMatrix, file: *const c_char) -> SsStatus {
    guard(|| Ok(save_matrix(path(file)?, &as_ref(m, "matrix")?.0)?))
}

/// # Safety
/// `m` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_free(m: *mut SsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Orthonormalizes the columns of `m` into a subspace.
///
/// # Safety
/// `m` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_subspace_from_matrix(m: *const SsMatrix, out: *mut *mut SsSubspace) -> SsStatus {
    guard(|| put(out, SsSubspace(make_subspace(&as_ref(m, "matrix")?.0)?)))
}

/// Haar-random `dim`-dimensional subspace of R^`ambient`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_subspace_random(ambient: usize, dim: usize, seed: u64, out: *mut *mut SsSubspace) -> SsStatus {
    guard(|| put(out, SsSubspace(generate_random_subspace(ambient, dim, seed)?)))
}

/// Pair with `n_cosines` prescribed principal cosines; the first subspace
/// has dimension `n_cosines`, the second `d2`.
///
/// # Safety
/// `cosines` must point to `n_cosines` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_subspace_pair_with_angles(
    ambient: usize,
    cosines: *const f64,
    n_cosines: usize,
    d2: usize,
    seed: u64,
    out1: *mut *mut SsSubspace,
    out2: *mut *mut SsSubspace,
) -> SsStatus {
    guard(|| {
        if out1.is_null() || out2.is_null() {
            return Err(null("output pointer"));
        }
        let (x1, x2, _) = generate_pair_with_angles(ambient, slice(cosines, n_cosines, "cosines")?, d2, seed)?;
        put(out1, SsSubspace(x1))?;
        put(out2, SsSubspace(x2))
    })
}

/// # Safety
/// `x` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_subspace_dim(x: *const SsSubspace) -> usize {
    x.as_ref().map_or(0, |x| x.0.dim())
}

/// # Safety
/// `x` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_subspace_ambient(x: *const SsSubspace) -> usize {
    x.as_ref().map_or(0, |x| x.0.ambient_dim())
}

/// Copy of the orthonormal basis as a new matrix handle.
///
/// # Safety
/// `x` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_subspace_basis(x: *const SsSubspace, out: *mut *mut SsMatrix) -> SsStatus {
    guard(|| put(out, SsMatrix(as_ref(x, "subspace")?.0.basis().clone())))
}

/// # Safety
/// `x` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ss_subspace_free(x: *mut SsSubspace) {
    if !x.is_null() {
        drop(Box::from_raw(x));
    }
}

/// Principal cosines (descending, `min(d1, d2)` of them) plus affinity² and
/// distance². Any output pointer may be NULL to skip it; `cosines` needs
/// room for `capacity` doubles.
///
/// # Safety
/// Handles must be live; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_principal_angles(
    x1: *const SsSubspace,
    x2: *const SsSubspace,
    cosines: *mut f64,
    capacity: usize,
    affinity_sq: *mut f64,
    distance_sq: *mut f64,
) -> SsStatus {
    guard(|| {
        let g = principal_angles(&as_ref(x1, "x1")?.0, &as_ref(x2, "x2")?.0)?;
        if !cosines.is_null() {
            if capacity < g.cosines.len() {
                return Err(Fail(
                    SsStatus::BufferTooSmall,
                    format!("need {} doubles for cosines, have {capacity}", g.cosines.len()),
                ));
            }
            ptr::copy_nonoverlapping(g.cosines.as_ptr(), cosines, g.cosines.len());
        }
        if !affinity_sq.is_null() {
            *affinity_sq = g.affinity_sq;
        }
        if !distance_sq.is_null() {
            *distance_sq = g.distance_sq;
        }
        Ok(())
    })
}

/// `n×ambient` operator with i.i.d. N(0, 1/n) entries drawn from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_sketch_operator_new(
    n: usize,
    ambient: usize,
    seed: u64,
    out: *mut *mut SsSketchOperator,
) -> SsStatus {
    guard(|| put(out, SsSketchOperator(gaussian_operator(n, ambient, seed)?)))
}

/// # Safety
/// `op` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_sketch_operator_n(op: *const SsSketchOperator) -> usize {
    op.as_ref().map_or(0, |op| op.0.n())
}

/// `span(Φ·U)`; fails with `SS_STATUS_DEGENERATE_SKETCH` on rank collapse.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_sketch_apply(
    op: *const SsSketchOperator,
    x: *const SsSubspace,
    out: *mut *mut SsSubspace,
) -> SsStatus {
    guard(|| put(out, SsSubspace(apply(&as_ref(op, "operator")?.0, &as_ref(x, "subspace")?.0)?)))
}

/// # Safety
/// `op` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ss_sketch_operator_free(op: *mut SsSketchOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// `aff² + (d2/n)(d1 − aff²)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_projected_affinity_estimate(
    affinity_sq: f64,
    d1: usize,
    d2: usize,
    n: usize,
    out: *mut f64,
) -> SsStatus {
    guard(|| {
        let v = projected_affinity_estimate(affinity_sq, d1, d2, n)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = v;
        Ok(())
    })
}

/// `D² − (d2/n)(D² − (d2 − d1)/2)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_projected_distance_estimate(
    distance_sq: f64,
    d1: usize,
    d2: usize,
    n: usize,
    out: *mut f64,
) -> SsStatus {
    guard(|| {
        let v = projected_distance_estimate(distance_sq, d1, d2, n)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = v;
        Ok(())
    })
}
