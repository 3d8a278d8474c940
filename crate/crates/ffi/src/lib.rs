//! C ABI over the core toolkit. Every function returns an [`AimStatus`];
//! on failure [`aim_last_error_message`] describes the error for the calling
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use aimeval::attribution::attribute;
use aimeval::cli::config::MethodSpec;
use aimeval::model::Model;
use aimeval::protocol::{area_metrics, spearman, CurveMeta, DegradationCurve};
use aimeval::{Error, Tensor};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Parse = 4,
    NotFound = 5,
    Degenerate = 6,
    Numerical = 7,
    Internal = 8,
}

/// Opaque handle to a loaded classifier.
pub struct AimModel {
    inner: Model,
}

/// Faithfulness areas of one degradation curve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AimAreaMetrics {
    pub aoc: f64,
    pub abc: f64,
    pub auc: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("no interior nul"));
}

struct Fail(AimStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Shape(_) => AimStatus::ShapeMismatch,
            Error::NotFound(_) => AimStatus::NotFound,
            Error::Json(_) => AimStatus::Parse,
            Error::DegenerateDenominator { .. } => AimStatus::Degenerate,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::Attack(_) => AimStatus::Numerical,
            Error::Io(_) => AimStatus::Internal,
            _ => AimStatus::InvalidArgument,
        };
        Fail(code, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AimStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            AimStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(AimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(AimStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model<'a>(m: *const AimModel) -> Result<&'a Model, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

fn input(m: &Model, x: &[f64]) -> Result<Tensor, Fail> {
    Ok(Tensor::new(m.input_shape.clone(), x.to_vec())?)
}

fn copy_out(src: &[f64], dst: &mut [f64], what: &str) -> Result<(), Fail> {
    if src.len() != dst.len() {
        return Err(Fail(AimStatus::ShapeMismatch, format!("{what} buffer holds {} values, {} required", dst.len(), src.len())));
    }
    dst.copy_from_slice(src);
    Ok(())
}

unsafe fn store_model(m: Model, out: *mut *mut AimModel) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(AimModel { inner: m }));
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn aim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a model document. On success `*out` owns a handle to release with
/// [`aim_model_free`].
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn aim_model_load_json(json: *const c_char, out: *mut *mut AimModel) -> AimStatus {
    guard(|| {
        let m = Model::from_json(str_arg(json, "json")?)?;
        store_model(m, out)
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn aim_model_load_file(path: *const c_char, out: *mut *mut AimModel) -> AimStatus {
    guard(|| {
        let m = Model::load(Path::new(str_arg(path, "path")?))?;
        store_model(m, out)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from a load call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aim_model_free(model: *mut AimModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input values and of classes.
///
/// # Safety
/// `model` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn aim_model_dims(model: *const AimModel, input_len: *mut usize, num_classes: *mut usize) -> AimStatus {
    guard(|| {
        let m = self::model(model)?;
        if input_len.is_null() || num_classes.is_null() {
            return Err(null("output"));
        }
        *input_len = m.input_shape.iter().product();
        *num_classes = m.num_classes;
        Ok(())
    })
}

/// Logits of one flattened input.
///
/// # Safety
/// `x` must hold `x_len` values and `logits` room for `logits_len`.
#[no_mangle]
pub unsafe extern "C" fn aim_model_forward(model: *const AimModel, x: *const f64, x_len: usize, logits: *mut f64, logits_len: usize) -> AimStatus {
    guard(|| {
        let m = self::model(model)?;
        let z = m.forward(&input(m, slice(x, x_len, "x")?)?)?;
        copy_out(z.data(), slice_mut(logits, logits_len, "logits")?, "logits")
    })
}

/// Gradient of the cross-entropy loss of `label` with respect to the input.
///
/// # Safety
/// `x` and `grad` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn aim_model_input_gradient(model: *const AimModel, x: *const f64, len: usize, label: usize, grad: *mut f64) -> AimStatus {
    guard(|| {
        let m = self::model(model)?;
        let g = m.input_gradient(&input(m, slice(x, len, "x")?)?, label)?;
        copy_out(g.data(), slice_mut(grad, len, "grad")?, "grad")
    })
}

/// Saliency map of `method` (`GD`, `GI`, `SG`, `SS`, `VG`, `IG`, `RANDOM`,
/// or an absolute variant such as `IGA`) for `label`, with library defaults.
///
/// # Safety
/// `method` must be nul-terminated; `x` and `out` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn aim_attribute(
    model: *const AimModel,
    method: *const c_char,
    x: *const f64,
    len: usize,
    label: usize,
    seed: u64,
    out: *mut f64,
) -> AimStatus {
    guard(|| {
        let m = self::model(model)?;
        let MethodSpec::Method { method, absolute } = MethodSpec::parse(str_arg(method, "method")?)? else {
            return Err(Fail(AimStatus::InvalidArgument, "ORACLE needs a task definition".into()));
        };
        let cfg = aimeval::attribution::AttributionConfig { seed, ..aimeval::attribution::AttributionConfig::new(method).absolute(absolute) };
        let s = attribute(m, &input(m, slice(x, len, "x")?)?, label, &cfg)?;
        copy_out(s.values.data(), slice_mut(out, len, "out")?, "out")
    })
}

/// AOC, ABC and AUC of a curve sampled at `n` ratios.
///
/// # Safety
/// `ratios`, `acc_morf` and `acc_lerf` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn aim_area_metrics(
    ratios: *const f64,
    acc_morf: *const f64,
    acc_lerf: *const f64,
    n: usize,
    acc0: f64,
    acc_full: f64,
    out: *mut AimAreaMetrics,
) -> AimStatus {
    guard(|| {
        let curve = DegradationCurve {
            ratios: slice(ratios, n, "ratios")?.to_vec(),
            acc_morf: slice(acc_morf, n, "acc_morf")?.to_vec(),
            acc_lerf: slice(acc_lerf, n, "acc_lerf")?.to_vec(),
            acc0,
            acc_full,
            meta: CurveMeta::default(),
        };
        let a = area_metrics(&curve)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = AimAreaMetrics { aoc: a.aoc, abc: a.abc, auc: a.auc };
        Ok(())
    })
}

/// Spearman rank correlation with average ranks for ties. `*degenerate` is
/// set to 1 when either side is constant (ρ is then 0).
///
/// # Safety
/// `a` and `b` must each hold `n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn aim_spearman(a: *const f64, b: *const f64, n: usize, rho: *mut f64, degenerate: *mut i32) -> AimStatus {
    guard(|| {
        let s = spearman(slice(a, n, "a")?, slice(b, n, "b")?)?;
        if rho.is_null() {
            return Err(null("rho"));
        }
        *rho = s.rho;
        if !degenerate.is_null() {
            *degenerate = s.degenerate as i32;
        }
        Ok(())
    })
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn aim_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

#[cfg(test)]
mod tests;
