//! C interface to `hiercubes`.
//!
//! Every function returns an [`HcStatus`]; results are written through out
//! pointers. Blocks are passed as strings in the `j:(m1,...,md)` notation and
//! block lists separate blocks with `;`. Strings returned by the library are
//! owned by the caller and must be released with [`hc_string_free`]. After a
//! failure, [`hc_last_error_message`] describes the error of the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hiercubes::activities::ActivityModel;
use hiercubes::analytics::{
    critical_mu, effective_activity, exact_marginal, existence_report, occupation_ratio, pair_covariance,
    partition_function, partition_function_limit, Depth, Volume,
};
use hiercubes::blocks::{Block, Geometry};
use hiercubes::error::Error;
use hiercubes::logreal::LogReal;
use hiercubes::oracle::{default_matrix, run_suite};
use hiercubes::sampler::{Sampler, SamplerKind};

/// Result codes of every `hc_*` function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Refused = 4,
    Undecided = 5,
    CapExceeded = 6,
    Io = 7,
    Panic = 8,
}

/// Pass as `depth` to evaluate the limit of vanishing scale truncation.
pub const HC_DEPTH_LIMIT: i64 = -1;

/// Kind tag of [`HcLogReal`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcLogKind {
    Zero = 0,
    Finite = 1,
    Infinite = 2,
}

/// A non-negative number stored by its logarithm; `ln` is meaningful only
/// for `Finite`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcLogReal {
    pub kind: HcLogKind,
    pub ln: f64,
}

impl From<LogReal> for HcLogReal {
    fn from(x: LogReal) -> Self {
        match x {
            LogReal::Zero => HcLogReal { kind: HcLogKind::Zero, ln: f64::NEG_INFINITY },
            LogReal::Finite(ln) => HcLogReal { kind: HcLogKind::Finite, ln },
            LogReal::Infinite => HcLogReal { kind: HcLogKind::Infinite, ln: f64::INFINITY },
        }
    }
}

/// Sampler constructions selectable through [`hc_sampler_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcSamplerKind {
    TopDown = 0,
    BernoulliMax = 1,
    Infinite = 2,
    Mandelbrot = 3,
}

/// Opaque activity model.
pub struct HcModel {
    inner: ActivityModel,
}

/// Opaque prepared sampler.
pub struct HcSampler {
    inner: Sampler,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

enum Failure {
    Null(&'static str),
    Lib(Error),
    Utf8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_of(f: &Failure) -> HcStatus {
    match f {
        Failure::Null(_) => HcStatus::NullPointer,
        Failure::Utf8 => HcStatus::InvalidArgument,
        Failure::Lib(e) => match e {
            Error::Range(_) => HcStatus::OutOfRange,
            Error::Domain(_) | Error::DimensionMismatch { .. } | Error::Parse(_) | Error::Json(_) => {
                HcStatus::InvalidArgument
            }
            Error::Refused(_) => HcStatus::Refused,
            Error::Undecided(_) | Error::Bracket(_) => HcStatus::Undecided,
            Error::CapExceeded { .. } => HcStatus::CapExceeded,
            Error::Io(_) => HcStatus::Io,
        },
    }
}

fn message_of(f: &Failure) -> String {
    match f {
        Failure::Null(what) => format!("null pointer passed for {what}"),
        Failure::Utf8 => "string argument is not valid UTF-8".into(),
        Failure::Lib(e) => e.to_string(),
    }
}

fn set_error(msg: Option<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            HcStatus::Ok
        }
        Ok(Err(failure)) => {
            set_error(Some(message_of(&failure)));
            status_of(&failure)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(Some(format!("panic: {msg}")));
            HcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8)
}

unsafe fn block_arg(p: *const c_char, what: &'static str) -> Result<Block, Failure> {
    Ok(str_arg(p, what)?.parse()?)
}

unsafe fn blocks_arg(p: *const c_char, what: &'static str) -> Result<Vec<Block>, Failure> {
    str_arg(p, what)?
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse().map_err(Failure::Lib))
        .collect()
}

unsafe fn model_arg<'a>(p: *const HcModel) -> Result<&'a ActivityModel, Failure> {
    p.as_ref().map(|m| &m.inner).ok_or(Failure::Null("model"))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn depth_of(depth: i64) -> Result<Depth, Failure> {
    match depth {
        HC_DEPTH_LIMIT => Ok(Depth::Limit),
        n if n >= 0 => Ok(Depth::Truncated(n)),
        n => Err(Failure::Lib(Error::Domain(format!("depth {n} is neither HC_DEPTH_LIMIT nor non-negative")))),
    }
}

unsafe fn volume_arg(window: *const c_char) -> Result<Volume, Failure> {
    if window.is_null() {
        Ok(Volume::Infinite)
    } else {
        Ok(Volume::Finite(block_arg(window, "window")?))
    }
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Release with
/// [`hc_string_free`].
#[no_mangle]
pub extern "C" fn hc_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().clone().map_or(ptr::null_mut(), owned_string))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a model from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hc_model_from_json(json: *const c_char, out: *mut *mut HcModel) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = ActivityModel::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(HcModel { inner }));
        Ok(())
    })
}

/// The constant activity `z` on every block of a `d`-dimensional, `M`-adic hierarchy.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hc_model_constant(dim: u32, base: u32, z: f64, out: *mut *mut HcModel) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = Geometry::new(dim as usize, base)?;
        let inner = ActivityModel::homogeneous(g, hiercubes::activities::ScaleSequence::constant(z))?;
        *out = Box::into_raw(Box::new(HcModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hc_model_free(model: *mut HcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid; the result is released with [`hc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn hc_model_to_json(model: *const HcModel, out: *mut *mut c_char) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = owned_string(model_arg(model)?.to_json());
        Ok(())
    })
}

/// `Ξ` of `window` with activities restricted to scales `>= -depth`, or
/// the untruncated limit for [`HC_DEPTH_LIMIT`].
///
/// # Safety
/// Pointers must be valid and strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hc_partition_function(
    model: *const HcModel,
    window: *const c_char,
    depth: i64,
    out: *mut HcLogReal,
) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model = model_arg(model)?;
        let window = block_arg(window, "window")?;
        let xi = match depth_of(depth)? {
            Depth::Limit => {
                let limit = partition_function_limit(model, &window)?;
                if !limit.converged {
                    return Err(Failure::Lib(Error::Undecided(limit.certificate)));
                }
                limit.value
            }
            Depth::Truncated(n) => partition_function(model, &window, n)?,
        };
        *out = xi.into();
        Ok(())
    })
}

/// Effective activity `ẑ` of `block`.
///
/// # Safety
/// Pointers must be valid and strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hc_effective_activity(
    model: *const HcModel,
    block: *const c_char,
    depth: i64,
    out: *mut HcLogReal,
) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = effective_activity(model_arg(model)?, &block_arg(block, "block")?, depth_of(depth)?)?.into();
        Ok(())
    })
}

/// Occupation ratio `ρ̂ = ẑ/(1+ẑ)` of `block`.
///
/// # Safety
/// Pointers must be valid and strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hc_occupation_ratio(
    model: *const HcModel,
    block: *const c_char,
    depth: i64,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = occupation_ratio(model_arg(model)?, &block_arg(block, "block")?, depth_of(depth)?)?;
        Ok(())
    })
}

/// Probability that every block of `blocks` is occupied. A NULL `window`
/// selects infinite volume.
///
/// # Safety
/// Pointers must be valid and strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hc_exact_marginal(
    model: *const HcModel,
    blocks: *const c_char,
    window: *const c_char,
    depth: i64,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let blocks = blocks_arg(blocks, "blocks")?;
        *out = exact_marginal(model_arg(model)?, &blocks, &volume_arg(window)?, depth_of(depth)?)?;
        Ok(())
    })
}

/// Covariance of the occupation indicators of two blocks. A NULL `window`
/// selects infinite volume.
///
/// # Safety
/// Pointers must be valid and strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hc_pair_covariance(
    model: *const HcModel,
    block1: *const c_char,
    block2: *const c_char,
    window: *const c_char,
    depth: i64,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (a, b) = (block_arg(block1, "block1")?, block_arg(block2, "block2")?);
        *out = pair_covariance(model_arg(model)?, &a, &b, &volume_arg(window)?, depth_of(depth)?)?.cov;
        Ok(())
    })
}

/// Existence verdict and certificates as JSON.
///
/// # Safety
/// Pointers must be valid; the result is released with [`hc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn hc_existence_report(model: *const HcModel, out: *mut *mut c_char) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let report = existence_report(model_arg(model)?);
        *out = owned_string(serde_json::to_string(&report).map_err(Error::from)?);
        Ok(())
    })
}

/// Critical chemical potential of the parametric family in dimension `dim`
/// with `M = 2`. `mu_c` receives `+inf` when no finite value exists;
/// `report` may be NULL, otherwise it receives the full report as JSON.
///
/// # Safety
/// `mu_c` must be valid; `report` must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn hc_critical_mu(
    dim: u32,
    coupling: f64,
    alpha: f64,
    tol: f64,
    mu_c: *mut f64,
    report: *mut *mut c_char,
) -> HcStatus {
    guard(|| {
        let mu_c = out_arg(mu_c, "mu_c")?;
        let r = critical_mu(Geometry::new(dim as usize, 2)?, coupling, alpha, tol)?;
        *mu_c = r.mu_c;
        if let Some(report) = report.as_mut() {
            *report = owned_string(serde_json::to_string(&r).map_err(Error::from)?);
        }
        Ok(())
    })
}

/// Prepares a sampler on `window` down to scale `-depth`. `kind` is one of
/// the [`HcSamplerKind`] values; `p` is read only by the Mandelbrot
/// construction.
///
/// # Safety
/// Pointers must be valid and strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hc_sampler_new(
    model: *const HcModel,
    window: *const c_char,
    depth: i64,
    kind: c_int,
    p: f64,
    out: *mut *mut HcSampler,
) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kind = match kind {
            k if k == HcSamplerKind::TopDown as c_int => SamplerKind::TopDown,
            k if k == HcSamplerKind::BernoulliMax as c_int => SamplerKind::BernoulliMax,
            k if k == HcSamplerKind::Infinite as c_int => SamplerKind::Infinite,
            k if k == HcSamplerKind::Mandelbrot as c_int => SamplerKind::Mandelbrot { p },
            k => return Err(Failure::Lib(Error::Domain(format!("unknown sampler kind {k}")))),
        };
        let inner = Sampler::new(model_arg(model)?, &block_arg(window, "window")?, depth, kind)?;
        *out = Box::into_raw(Box::new(HcSampler { inner }));
        Ok(())
    })
}

/// # Safety
/// `sampler` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hc_sampler_free(sampler: *mut HcSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Sample number `index` of the stream `seed`, as a JSON configuration.
///
/// # Safety
/// Pointers must be valid; the result is released with [`hc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn hc_sampler_sample_json(
    sampler: *const HcSampler,
    seed: u64,
    index: u64,
    out: *mut *mut c_char,
) -> HcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let sampler = sampler.as_ref().ok_or(Failure::Null("sampler"))?;
        *out = owned_string(sampler.inner.sample(seed, index).to_json());
        Ok(())
    })
}

/// Runs the built-in verifier suite. `failed` receives the number of failed
/// checks; `report` may be NULL, otherwise it receives the results as JSON.
///
/// # Safety
/// `failed` must be valid; `report` must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn hc_validate(inject_perturbation: c_int, failed: *mut u32, report: *mut *mut c_char) -> HcStatus {
    guard(|| {
        let failed = out_arg(failed, "failed")?;
        let results = run_suite(&default_matrix()?, inject_perturbation != 0)?;
        *failed = results.iter().filter(|r| !r.passed).count() as u32;
        if let Some(report) = report.as_mut() {
            *report = owned_string(serde_json::to_string(&results).map_err(Error::from)?);
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Failure::Lib(Error::Refused("x".into()))), HcStatus::Refused);
        assert_eq!(status_of(&Failure::Lib(Error::Bracket("x".into()))), HcStatus::Undecided);
        assert_eq!(status_of(&Failure::Null("x")), HcStatus::NullPointer);
    }

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, HcStatus::Panic);
        let msg = hc_last_error_message();
        let text = unsafe { CStr::from_ptr(msg) }.to_str().unwrap().to_owned();
        unsafe { hc_string_free(msg) };
        assert_eq!(text, "panic: boom");
    }

    #[test]
    fn depth_encoding() {
        assert!(matches!(depth_of(HC_DEPTH_LIMIT), Ok(Depth::Limit)));
        assert!(matches!(depth_of(3), Ok(Depth::Truncated(3))));
        assert!(depth_of(-2).is_err());
    }
}
