//! C ABI over `fpliveness`.
//!
//! Images and models are opaque heap handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns an
//! [`FplStatus`]; on failure [`fpl_last_error_message`] describes the most
//! recent error on the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fpliveness::cnn::{load_model, ModelWeights};
use fpliveness::image::load_image;
use fpliveness::metrics::{EvalReport, Level};
use fpliveness::patch::{dense_sample, PatchParams};
use fpliveness::pipeline::classify_image_data;
use fpliveness::{Error, ErrorCategory, GrayImage, Label};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FplStatus {
    Ok = 0,
    NullArgument = 1,
    Input = 2,
    InvalidArgument = 3,
    Model = 4,
    Data = 5,
    Io = 6,
    Panic = 7,
}

impl From<ErrorCategory> for FplStatus {
    fn from(c: ErrorCategory) -> Self {
        match c {
            ErrorCategory::Input => FplStatus::Input,
            ErrorCategory::InvalidArgument => FplStatus::InvalidArgument,
            ErrorCategory::Model => FplStatus::Model,
            ErrorCategory::Data => FplStatus::Data,
            ErrorCategory::Io => FplStatus::Io,
        }
    }
}

/// Opaque grayscale image.
pub struct FplImage(GrayImage);

/// Opaque trained patch classifier.
pub struct FplModel(ModelWeights);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FplPatchParams {
    pub sigma: usize,
    pub patch_multiplier: usize,
    pub padding_multiplier: usize,
    pub noise_factor: f64,
    pub fill: u8,
}

impl From<FplPatchParams> for PatchParams {
    fn from(p: FplPatchParams) -> Self {
        PatchParams {
            sigma: p.sigma,
            patch_multiplier: p.patch_multiplier,
            padding_multiplier: p.padding_multiplier,
            noise_factor: p.noise_factor,
            fill: p.fill,
        }
    }
}

/// 0 = live, 1 = spoof.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FplResult {
    pub decision: u32,
    pub aggregate_live: f64,
    pub aggregate_spoof: f64,
    pub patch_count: usize,
}

/// Confusion counts, live being the positive class.
///
/// cbindgen:field-names=[tp, tn, fp, fn]
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FplCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Percentages; a rate with a zero denominator is NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FplRates {
    pub far: f64,
    pub frr: f64,
    pub ace: f64,
    pub accuracy: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> FplStatus {
    let status = FplStatus::from(e.category());
    set_last_error(e.to_string());
    status
}

fn null_arg(name: &str) -> FplStatus {
    set_last_error(format!("{name} is null"));
    FplStatus::NullArgument
}

/// Runs `f`, turning a panic into [`FplStatus::Panic`].
fn guard(f: impl FnOnce() -> FplStatus) -> FplStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {msg}"));
            FplStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, FplStatus> {
    if path.is_null() {
        return Err(null_arg("path"));
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_last_error("path is not valid UTF-8".into());
            Err(FplStatus::InvalidArgument)
        }
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fpl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fpl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn fpl_patch_params_default() -> FplPatchParams {
    let p = PatchParams::default();
    FplPatchParams {
        sigma: p.sigma,
        patch_multiplier: p.patch_multiplier,
        padding_multiplier: p.padding_multiplier,
        noise_factor: p.noise_factor,
        fill: p.fill,
    }
}

/// Decodes a PNG or PGM file into a new image handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fpl_image_load(path: *const c_char, out: *mut *mut FplImage) -> FplStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("out");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_image(path) {
            Ok(img) => {
                *out = Box::into_raw(Box::new(FplImage(img)));
                FplStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Copies `width * height` row-major bytes into a new image handle.
///
/// # Safety
/// `data` must point to at least `width * height` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn fpl_image_from_gray(
    width: usize,
    height: usize,
    data: *const u8,
    out: *mut *mut FplImage,
) -> FplStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("out");
        }
        if data.is_null() {
            return null_arg("data");
        }
        let Some(len) = width.checked_mul(height) else {
            return fail(Error::InvalidParams("image size overflows".into()));
        };
        let bytes = std::slice::from_raw_parts(data, len).to_vec();
        match GrayImage::new(width, height, bytes) {
            Ok(img) => {
                *out = Box::into_raw(Box::new(FplImage(img)));
                FplStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `image` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fpl_image_free(image: *mut FplImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Width in pixels, 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpl_image_width(image: *const FplImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.width())
}

/// Height in pixels, 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpl_image_height(image: *const FplImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.height())
}

/// Number of patches dense sampling keeps for `image`.
///
/// # Safety
/// All pointers must be valid; `image` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpl_dense_sample_count(
    image: *const FplImage,
    params: *const FplPatchParams,
    out_count: *mut usize,
) -> FplStatus {
    guard(|| {
        let (Some(img), Some(params)) = (image.as_ref(), params.as_ref()) else {
            return null_arg("image or params");
        };
        if out_count.is_null() {
            return null_arg("out_count");
        }
        match dense_sample(&img.0, &PatchParams::from(*params)) {
            Ok(p) => {
                *out_count = p.len();
                FplStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a model file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fpl_model_load(path: *const c_char, out: *mut *mut FplModel) -> FplStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("out");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_model(path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(FplModel(m)));
                FplStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fpl_model_free(model: *mut FplModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side of the square patches the model accepts, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpl_model_input_side(model: *const FplModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config.input_side)
}

/// Samples, scores and aggregates one fingerprint. An image without kept
/// patches fails with the data status.
///
/// # Safety
/// All pointers must be valid; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn fpl_classify(
    model: *const FplModel,
    image: *const FplImage,
    params: *const FplPatchParams,
    out: *mut FplResult,
) -> FplStatus {
    guard(|| {
        let (Some(model), Some(img), Some(params)) =
            (model.as_ref(), image.as_ref(), params.as_ref())
        else {
            return null_arg("model, image or params");
        };
        if out.is_null() {
            return null_arg("out");
        }
        match classify_image_data(&model.0, &PatchParams::from(*params), &img.0, "image") {
            Ok(r) => {
                *out = FplResult {
                    decision: match r.decision {
                        Label::Live => 0,
                        Label::Spoof => 1,
                    },
                    aggregate_live: r.aggregate_live,
                    aggregate_spoof: r.aggregate_spoof,
                    patch_count: r.patch_count,
                };
                FplStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// FAR, FRR, ACE and accuracy for a confusion matrix.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fpl_metrics(counts: *const FplCounts, out: *mut FplRates) -> FplStatus {
    guard(|| {
        let Some(c) = counts.as_ref() else {
            return null_arg("counts");
        };
        if out.is_null() {
            return null_arg("out");
        }
        let r = EvalReport::from_counts(
            Level::Fingerprint,
            fpliveness::metrics::ConfusionCounts {
                tp: c.tp,
                tn: c.tn,
                fp: c.fp,
                fn_: c.fn_,
            },
        );
        *out = FplRates {
            far: r.far.unwrap_or(f64::NAN),
            frr: r.frr.unwrap_or(f64::NAN),
            ace: r.ace.unwrap_or(f64::NAN),
            accuracy: r.accuracy.unwrap_or(f64::NAN),
        };
        FplStatus::Ok
    })
}
