//! C interface for the comparison library: opaque surface handles, integer
//! status codes, and plain structs for parameters and scores. Every entry
//! point catches panics at the boundary and records a per-thread error
//! message retrievable with `cm_last_error_message`.
#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::c_char;
use ndarray::Array2;

use cartridge_match::align::{similarity_with, AlignParams};
use cartridge_match::preprocess::{preprocess_full, PreprocessParams};
use cartridge_match::surface::{load_depth_grid, save_depth_grid};
use cartridge_match::{Error, Surface};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum cm_status {
    CM_OK = 0,
    CM_NULL_ARGUMENT = 1,
    CM_INVALID_PARAM = 2,
    CM_INVALID_DATA = 3,
    CM_IO_ERROR = 4,
    CM_FORMAT_ERROR = 5,
    CM_PANIC = 6,
}

use cm_status::*;

/// Opaque surface handle. Created by `cm_surface_load`,
/// `cm_surface_from_values`, or `cm_preprocess`; released with
/// `cm_surface_free`.
pub struct cm_surface {
    inner: Surface,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: cm_status, message: impl Into<String>) -> cm_status {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).expect("NUL-free message"));
    status
}

fn fail_with(error: Error) -> cm_status {
    let status = match &error {
        Error::Param(_) => CM_INVALID_PARAM,
        Error::Data(_) => CM_INVALID_DATA,
        Error::Io { .. } => CM_IO_ERROR,
        Error::Format { .. } => CM_FORMAT_ERROR,
    };
    fail(status, error.to_string())
}

fn guarded(body: impl FnOnce() -> cm_status) -> cm_status {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(cause) => {
            let message = if let Some(text) = cause.downcast_ref::<&str>() {
                (*text).to_string()
            } else if let Some(text) = cause.downcast_ref::<String>() {
                text.clone()
            } else {
                "unidentified panic in library call".to_string()
            };
            fail(CM_PANIC, message)
        }
    }
}

/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, cm_status> {
    if ptr.is_null() {
        return Err(fail(CM_NULL_ARGUMENT, format!("{name} must not be null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(CM_INVALID_PARAM, format!("{name} must be valid UTF-8")))
}

unsafe fn deliver(out: *mut *mut cm_surface, surface: Surface) -> cm_status {
    *out = Box::into_raw(Box::new(cm_surface { inner: surface }));
    CM_OK
}

unsafe fn borrow<'a>(handle: *const cm_surface, name: &str) -> Result<&'a Surface, cm_status> {
    if handle.is_null() {
        return Err(fail(CM_NULL_ARGUMENT, format!("{name} must not be null")));
    }
    Ok(&(*handle).inner)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on the calling thread. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a C3DP depth grid from `path` into a new handle written to `out`.
/// `id` may be null, in which case the file stem is used.
///
/// # Safety
/// `path` and `id` follow the C string contract; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_load(
    path: *const c_char,
    id: *const c_char,
    out: *mut *mut cm_surface,
) -> cm_status {
    guarded(|| {
        if out.is_null() {
            return fail(CM_NULL_ARGUMENT, "out must not be null");
        }
        let path = match required_str(path, "path") {
            Ok(text) => text,
            Err(status) => return status,
        };
        let mut surface = match load_depth_grid(Path::new(path)) {
            Ok(surface) => surface,
            Err(error) => return fail_with(error),
        };
        if !id.is_null() {
            match required_str(id, "id") {
                Ok(text) => surface.set_id(text),
                Err(status) => return status,
            }
        }
        deliver(out, surface)
    })
}

/// Writes a handle back out as a C3DP depth grid.
///
/// # Safety
/// `surface` must be a live handle; `path` follows the C string contract.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_save(surface: *const cm_surface, path: *const c_char) -> cm_status {
    guarded(|| {
        let surface = match borrow(surface, "surface") {
            Ok(surface) => surface,
            Err(status) => return status,
        };
        let path = match required_str(path, "path") {
            Ok(text) => text,
            Err(status) => return status,
        };
        match save_depth_grid(surface, Path::new(path)) {
            Ok(()) => CM_OK,
            Err(error) => fail_with(error),
        }
    })
}

/// Builds a surface from a row-major grid of `rows × cols` values in µm.
/// `valid` may be null (all cells valid); non-finite values are treated as
/// missing either way.
///
/// # Safety
/// `values` (and `valid` when non-null) must point to `rows × cols`
/// elements; `id` follows the C string contract; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_from_values(
    values: *const f64,
    valid: *const u8,
    rows: u32,
    cols: u32,
    resolution_um: f64,
    id: *const c_char,
    out: *mut *mut cm_surface,
) -> cm_status {
    guarded(|| {
        if values.is_null() || out.is_null() {
            return fail(CM_NULL_ARGUMENT, "values and out must not be null");
        }
        let id = match required_str(id, "id") {
            Ok(text) => text,
            Err(status) => return status,
        };
        let (rows, cols) = (rows as usize, cols as usize);
        if rows == 0 || cols == 0 {
            return fail(CM_INVALID_DATA, "grid must be at least 1x1");
        }
        let cells = std::slice::from_raw_parts(values, rows * cols);
        let flags: Vec<bool> = if valid.is_null() {
            cells.iter().map(|v| v.is_finite()).collect()
        } else {
            std::slice::from_raw_parts(valid, rows * cols)
                .iter()
                .zip(cells)
                .map(|(&flag, value)| flag != 0 && value.is_finite())
                .collect()
        };
        let mut grid = Array2::from_shape_vec((rows, cols), cells.to_vec()).expect("sized above");
        let mask = Array2::from_shape_vec((rows, cols), flags).expect("sized above");
        for ((r, c), ok) in mask.indexed_iter() {
            if !ok {
                grid[(r, c)] = 0.0;
            }
        }
        match Surface::new(grid, mask, resolution_um, id) {
            Ok(surface) => deliver(out, surface),
            Err(error) => fail_with(error),
        }
    })
}

/// Copies a handle's grid out: `values` receives one f64 per cell in
/// row-major order with NaN at invalid cells; `valid`, when non-null,
/// receives 1/0 flags. `len` must equal rows × cols.
///
/// # Safety
/// `values` (and `valid` when non-null) must point to `len` writable
/// elements.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_copy_values(
    surface: *const cm_surface,
    values: *mut f64,
    valid: *mut u8,
    len: usize,
) -> cm_status {
    guarded(|| {
        let surface = match borrow(surface, "surface") {
            Ok(surface) => surface,
            Err(status) => return status,
        };
        if values.is_null() {
            return fail(CM_NULL_ARGUMENT, "values must not be null");
        }
        let cells = surface.rows() * surface.cols();
        if len != cells {
            return fail(CM_INVALID_PARAM, format!("len {len} does not match {cells} cells"));
        }
        let out_values = std::slice::from_raw_parts_mut(values, len);
        for (slot, (value, &ok)) in out_values.iter_mut().zip(surface.values().iter().zip(surface.mask())) {
            *slot = if ok { *value } else { f64::NAN };
        }
        if !valid.is_null() {
            let out_valid = std::slice::from_raw_parts_mut(valid, len);
            for (slot, &ok) in out_valid.iter_mut().zip(surface.mask()) {
                *slot = ok as u8;
            }
        }
        CM_OK
    })
}

/// Row count; 0 when the handle is null.
///
/// # Safety
/// `surface` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_rows(surface: *const cm_surface) -> u32 {
    if surface.is_null() { 0 } else { (*surface).inner.rows() as u32 }
}

/// Column count; 0 when the handle is null.
///
/// # Safety
/// `surface` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_cols(surface: *const cm_surface) -> u32 {
    if surface.is_null() { 0 } else { (*surface).inner.cols() as u32 }
}

/// Lateral resolution in µm per pixel; 0 when the handle is null.
///
/// # Safety
/// `surface` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_resolution_um(surface: *const cm_surface) -> f64 {
    if surface.is_null() { 0.0 } else { (*surface).inner.resolution_um() }
}

/// Number of valid cells; 0 when the handle is null.
///
/// # Safety
/// `surface` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_valid_count(surface: *const cm_surface) -> usize {
    if surface.is_null() { 0 } else { (*surface).inner.valid_count() }
}

/// Copies the surface id into `buf` as NUL-terminated UTF-8 and returns the
/// number of bytes required including the terminator. Nothing is written
/// when `buf` is null or `len` is too small; 0 is returned for a null
/// handle.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_id(surface: *const cm_surface, buf: *mut c_char, len: usize) -> usize {
    if surface.is_null() {
        return 0;
    }
    let id = (*surface).inner.id().as_bytes();
    let needed = id.len() + 1;
    if !buf.is_null() && len >= needed {
        std::ptr::copy_nonoverlapping(id.as_ptr(), buf as *mut u8, id.len());
        *buf.add(id.len()) = 0;
    }
    needed
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `surface` must be null or an owned live handle; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cm_surface_free(surface: *mut cm_surface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}

/// Preprocessing configuration. Obtain defaults from
/// `cm_preprocess_params_default` and override selectively.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct cm_preprocess_params {
    /// Points per RANSAC minimal sample (a plane needs 3).
    pub ransac_sample_size: u32,
    /// RANSAC inlier residual threshold, µm.
    pub ransac_inlier_threshold_um: f64,
    /// Desired probability of drawing one all-inlier sample.
    pub ransac_confidence: f64,
    /// Assumed outlier proportion.
    pub ransac_outlier_rate: f64,
    /// RANSAC sampling iterations.
    pub ransac_iterations: u32,
    /// Seed for the RANSAC sampler.
    pub ransac_seed: u64,
    /// Loess span (proportion of ring radii in each local fit).
    pub loess_span: f64,
    /// Loess polynomial degree, 1 or 2.
    pub loess_degree: u32,
    /// Bandpass short-wavelength cutoff, µm.
    pub filter_short_cutoff_um: f64,
    /// Bandpass long-wavelength cutoff, µm.
    pub filter_long_cutoff_um: f64,
    /// Common lateral resolution surfaces are resampled to, µm.
    pub resample_resolution_um: f64,
}

fn params_out(params: &PreprocessParams) -> cm_preprocess_params {
    cm_preprocess_params {
        ransac_sample_size: params.ransac.sample_size as u32,
        ransac_inlier_threshold_um: params.ransac.inlier_threshold_um,
        ransac_confidence: params.ransac.confidence,
        ransac_outlier_rate: params.ransac.outlier_rate,
        ransac_iterations: params.ransac.iterations as u32,
        ransac_seed: params.ransac.seed,
        loess_span: params.loess.span,
        loess_degree: params.loess.degree as u32,
        filter_short_cutoff_um: params.filter.short_cutoff_um,
        filter_long_cutoff_um: params.filter.long_cutoff_um,
        resample_resolution_um: params.resample_resolution_um,
    }
}

fn params_in(params: &cm_preprocess_params) -> PreprocessParams {
    let mut core = PreprocessParams::default();
    core.ransac.sample_size = params.ransac_sample_size as usize;
    core.ransac.inlier_threshold_um = params.ransac_inlier_threshold_um;
    core.ransac.confidence = params.ransac_confidence;
    core.ransac.outlier_rate = params.ransac_outlier_rate;
    core.ransac.iterations = params.ransac_iterations as usize;
    core.ransac.seed = params.ransac_seed;
    core.loess.span = params.loess_span;
    core.loess.degree = params.loess_degree as usize;
    core.filter.short_cutoff_um = params.filter_short_cutoff_um;
    core.filter.long_cutoff_um = params.filter_long_cutoff_um;
    core.resample_resolution_um = params.resample_resolution_um;
    core
}

/// Fills `out` with the default preprocessing configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_preprocess_params_default(out: *mut cm_preprocess_params) -> cm_status {
    guarded(|| {
        if out.is_null() {
            return fail(CM_NULL_ARGUMENT, "out must not be null");
        }
        *out = params_out(&PreprocessParams::default());
        CM_OK
    })
}

/// Runs the preprocessing chain — plane leveling, resampling to the common
/// resolution, ring-profile removal, bandpass — and writes a new handle to
/// `out`. `params` may be null for defaults.
///
/// # Safety
/// `input` must be a live handle; `params` must be null or point to a
/// valid struct; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_preprocess(
    input: *const cm_surface,
    params: *const cm_preprocess_params,
    out: *mut *mut cm_surface,
) -> cm_status {
    guarded(|| {
        let input = match borrow(input, "input") {
            Ok(surface) => surface,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(CM_NULL_ARGUMENT, "out must not be null");
        }
        let core_params = if params.is_null() { PreprocessParams::default() } else { params_in(&*params) };
        match preprocess_full(input, &core_params) {
            Ok(surface) => deliver(out, surface),
            Err(error) => fail_with(error),
        }
    })
}

/// Result of comparing two surfaces. Direction 1 aligns the second argument
/// onto the first; direction 2 the reverse. `s_hat` is the larger of the
/// two correlations.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct cm_pair_score {
    /// Correlation with the first argument as reference.
    pub c12: f64,
    /// Correlation with the second argument as reference.
    pub c21: f64,
    /// Pair similarity: max(c12, c21).
    pub s_hat: f64,
    /// Winning pose of direction 1: rotation (degrees) and row/column lags.
    pub theta_1: f64,
    pub k_1: i64,
    pub l_1: i64,
    /// Winning pose of direction 2.
    pub theta_2: f64,
    pub k_2: i64,
    pub l_2: i64,
}

/// Scores two preprocessed surfaces by maximized cross-correlation.
/// `lag_frac` bounds the translation search as a fraction of the grid size;
/// pass 0 or a negative value for the default of 0.2.
///
/// # Safety
/// `s1` and `s2` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_similarity(
    s1: *const cm_surface,
    s2: *const cm_surface,
    lag_frac: f64,
    out: *mut cm_pair_score,
) -> cm_status {
    guarded(|| {
        let first = match borrow(s1, "s1") {
            Ok(surface) => surface,
            Err(status) => return status,
        };
        let second = match borrow(s2, "s2") {
            Ok(surface) => surface,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(CM_NULL_ARGUMENT, "out must not be null");
        }
        let params =
            if lag_frac > 0.0 { AlignParams { lag_frac } } else { AlignParams::default() };
        let score = match similarity_with(first, second, &params) {
            Ok(score) => score,
            Err(error) => return fail_with(error),
        };
        // The library reports the pair in id order; flip back so direction 1
        // always has the first argument as reference.
        let flipped = score.id1 != first.id();
        let (one, two) = if flipped { (&score.align2, &score.align1) } else { (&score.align1, &score.align2) };
        *out = cm_pair_score {
            c12: one.ccf_max,
            c21: two.ccf_max,
            s_hat: score.s_hat,
            theta_1: one.theta_star,
            k_1: one.k_star,
            l_1: one.l_star,
            theta_2: two.theta_star,
            k_2: two.k_star,
            l_2: two.l_star,
        };
        CM_OK
    })
}
