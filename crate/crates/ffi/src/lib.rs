//! C ABI over the `fieldmax` library.
//!
//! Every fallible function returns an [`FmStatus`] and writes its result
//! through an out-pointer. On failure a message is kept per thread and can
//! be read with [`fm_last_error_message`]. Strings returned to the caller
//! must be released with [`fm_string_free`], handles with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fieldmax::config::parse_config_for;
use fieldmax::diagnostics::bvn_upper_orthant;
use fieldmax::runner::{run_experiment, write_outputs};
use fieldmax::{
    calibrate_level, derive_stream, exact_iid_joint, limit_value, CovarianceModel, Error, ExperimentKind,
    GaussianSampler, GridShape, LambdaModel, TailFunction,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DegenerateShape = 4,
    NotPositiveDefinite = 5,
    EmbeddingNotPsd = 6,
    ShapeMismatch = 7,
    OrderViolation = 8,
    TargetOutOfRange = 9,
    ParseError = 10,
    IoError = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&Error> for FmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DegenerateShape { .. } | Error::DegenerateSize(_) | Error::RatioBound { .. } => {
                FmStatus::DegenerateShape
            }
            Error::NotPositiveDefinite { .. } => FmStatus::NotPositiveDefinite,
            Error::EmbeddingNotPsd { .. } => FmStatus::EmbeddingNotPsd,
            Error::ShapeMismatch { .. } | Error::InvalidNesting { .. } => FmStatus::ShapeMismatch,
            Error::OrderViolation(_) => FmStatus::OrderViolation,
            Error::TargetOutOfRange { .. } => FmStatus::TargetOutOfRange,
            Error::Parse { .. } | Error::UnknownKey { .. } => FmStatus::ParseError,
            Error::Io(_) => FmStatus::IoError,
            _ => FmStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(FmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(FmStatus::from(&e), format!("{}: {e}", e.code()))
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> FmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            FmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(FmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(FmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(FmStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

/// Stationary covariance family.
pub struct FmModel {
    inner: CovarianceModel,
}

/// Gaussian field sampler bound to a model and a grid.
pub struct FmSampler {
    inner: GaussianSampler,
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn fm_status_name(status: FmStatus) -> *const c_char {
    let s: &'static str = match status {
        FmStatus::Ok => "Ok\0",
        FmStatus::NullPointer => "NullPointer\0",
        FmStatus::InvalidUtf8 => "InvalidUtf8\0",
        FmStatus::InvalidArgument => "InvalidArgument\0",
        FmStatus::DegenerateShape => "DegenerateShape\0",
        FmStatus::NotPositiveDefinite => "NotPositiveDefinite\0",
        FmStatus::EmbeddingNotPsd => "EmbeddingNotPSD\0",
        FmStatus::ShapeMismatch => "ShapeMismatch\0",
        FmStatus::OrderViolation => "OrderViolation\0",
        FmStatus::TargetOutOfRange => "TargetOutOfRange\0",
        FmStatus::ParseError => "ParseError\0",
        FmStatus::IoError => "IoError\0",
        FmStatus::BufferTooSmall => "BufferTooSmall\0",
        FmStatus::Panic => "Panic\0",
    };
    s.as_ptr().cast()
}

/// Create a covariance model. `family` is `independent`, `geometric`
/// (`a` = θ) or `polynomial` (`a` = C, `b` = α).
///
/// # Safety
/// `family` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_model_new(family: *const c_char, a: f64, b: f64, out: *mut *mut FmModel) -> FmStatus {
    guard(|| {
        let model = match text(family, "family")? {
            "independent" => CovarianceModel::Independent,
            "geometric" => CovarianceModel::geometric(a)?,
            "polynomial" => CovarianceModel::polynomial(a, b)?,
            other => return Err(Failure(FmStatus::InvalidArgument, format!("unknown family `{other}`"))),
        };
        write(out, Box::into_raw(Box::new(FmModel { inner: model })))
    })
}

/// # Safety
/// `model` must come from [`fm_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fm_model_free(model: *mut FmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Correlation at lag (j1, j2).
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fm_model_covariance(model: *const FmModel, j1: i64, j2: i64, out: *mut f64) -> FmStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Failure(FmStatus::NullPointer, "model is null".into()))?;
        write(out, m.inner.covariance_at(j1, j2))
    })
}

/// Sampler for an `n1` x `n2` grid. Grids above `dense_threshold` cells
/// use circulant embedding; pass 0 for the default threshold.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fm_sampler_new(
    model: *const FmModel,
    n1: usize,
    n2: usize,
    dense_threshold: usize,
    out: *mut *mut FmSampler,
) -> FmStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Failure(FmStatus::NullPointer, "model is null".into()))?;
        let shape = GridShape::new(n1, n2)?;
        let threshold = if dense_threshold == 0 { fieldmax::covgrid::DENSE_THRESHOLD } else { dense_threshold };
        let s = GaussianSampler::with_threshold(m.inner, shape, threshold)?;
        write(out, Box::into_raw(Box::new(FmSampler { inner: s })))
    })
}

/// # Safety
/// `sampler` must come from [`fm_sampler_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fm_sampler_free(sampler: *mut FmSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// `independent`, `dense` or `spectral`; a static string, null on a null handle.
///
/// # Safety
/// `sampler` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn fm_sampler_method(sampler: *const FmSampler) -> *const c_char {
    match sampler.as_ref().map(|s| s.inner.method()) {
        Some("independent") => "independent\0".as_ptr().cast(),
        Some("dense") => "dense\0".as_ptr().cast(),
        Some(_) => "spectral\0".as_ptr().cast(),
        None => ptr::null(),
    }
}

/// Draw replication `index` of master seed `seed` into `values`
/// (row-major, `len` must equal n1·n2).
///
/// # Safety
/// `sampler` must be valid and `values` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_sampler_sample(
    sampler: *const FmSampler,
    seed: u64,
    index: u64,
    values: *mut f64,
    len: usize,
) -> FmStatus {
    guard(|| {
        let s = sampler.as_ref().ok_or(Failure(FmStatus::NullPointer, "sampler is null".into()))?;
        if values.is_null() {
            return Err(Failure(FmStatus::NullPointer, "values is null".into()));
        }
        let cells = s.inner.shape().cells();
        if len < cells {
            return Err(Failure(FmStatus::BufferTooSmall, format!("need {cells} values, got {len}")));
        }
        let out = std::slice::from_raw_parts_mut(values, cells);
        s.inner.fill(&mut derive_stream(seed, index), out);
        Ok(())
    })
}

/// Level u with `cells` · tail(u) = `target`. `tail` is `gaussian`,
/// `chi(d)` or `orderstat(d,r)`.
///
/// # Safety
/// `tail` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_calibrate_level(tail: *const c_char, cells: f64, target: f64, out: *mut f64) -> FmStatus {
    guard(|| {
        let t: TailFunction = text(tail, "tail")?.parse()?;
        write(out, calibrate_level(&t, cells, target)?)
    })
}

/// P(X > u) for the named tail.
///
/// # Safety
/// `tail` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_tail(tail: *const c_char, u: f64, out: *mut f64) -> FmStatus {
    guard(|| {
        let t: TailFunction = text(tail, "tail")?.parse()?;
        write(out, t.tail(u))
    })
}

/// E[exp(−λκ − (1−λ)τ)] for `lambda` given as `point(p)`,
/// `twopoint(p1,p2,w)` or `beta(a,b)`.
///
/// # Safety
/// `lambda` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_limit_value(lambda: *const c_char, kappa: f64, tau: f64, out: *mut f64) -> FmStatus {
    guard(|| {
        let l: LambdaModel = text(lambda, "lambda")?.parse()?;
        write(out, limit_value(&l, kappa, tau)?)
    })
}

/// E_λ[(λ Φ(v) + (1−λ) Φ(u))^N] for an independent field.
///
/// # Safety
/// `lambda` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_exact_iid_joint(
    lambda: *const c_char,
    phi_u: f64,
    phi_v: f64,
    cells: u64,
    out: *mut f64,
) -> FmStatus {
    guard(|| {
        let l: LambdaModel = text(lambda, "lambda")?.parse()?;
        write(out, exact_iid_joint(&l, phi_u, phi_v, cells)?)
    })
}

/// P(X > h, Y > k) for a standard bivariate normal pair.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_bvn_upper_orthant(h: f64, k: f64, rho: f64, out: *mut f64) -> FmStatus {
    guard(|| write(out, bvn_upper_orthant(h, k, rho)?))
}

/// Run an experiment from configuration text. `kind` is `simulate`,
/// `asclt`, `calibrate`, `diagnose` or `limit`. When `out_dir` is not null
/// the result files are written there. The run summary is returned as a
/// JSON string in `out_json`, to be released with [`fm_string_free`].
///
/// # Safety
/// `kind` and `config` must be valid C strings, `out_dir` null or a valid
/// C string, `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_run_experiment(
    kind: *const c_char,
    config: *const c_char,
    out_dir: *const c_char,
    out_json: *mut *mut c_char,
) -> FmStatus {
    guard(|| {
        let kind: ExperimentKind = text(kind, "kind")?.parse()?;
        let cfg = parse_config_for(text(config, "config")?, Some(kind))?;
        let output = run_experiment(&cfg)?;
        if !out_dir.is_null() {
            write_outputs(&output, Path::new(text(out_dir, "out_dir")?))?;
        }
        let json = serde_json::to_string(&output.summary).map_err(Error::from)?;
        let c = CString::new(json).map_err(|e| Failure(FmStatus::InvalidArgument, e.to_string()))?;
        write(out_json, c.into_raw())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
