//! C ABI over `machopt-core`.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free`. Every function returns a [`MachoptStatus`]; on
//! failure, [`machopt_last_error`] describes the error on the calling thread.
//! Panics are caught at the boundary and reported as `MACHOPT_STATUS_PANIC`.
//! Strings returned by the library are freed with [`machopt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use machopt_core::analysis::{hdi, PredictionMode, Predictor};
use machopt_core::anova::finite_pop_sd_single;
use machopt_core::data::{machining_factors, parse_dataset, Coding, CovariateScale, Dataset, MachineId};
use machopt_core::design::build_design;
use machopt_core::gibbs::{run_chain, McmcConfig, PosteriorDraws, Prior};
use machopt_core::optim::{optimize, GaConfig, Metric, SearchSpace, ThresholdVector};
use machopt_core::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachoptStatus {
    Ok = 0,
    /// Null pointer or non-UTF-8 string.
    InvalidArgument = 1,
    Validation = 2,
    Numerical = 3,
    MissingArtifact = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachoptMachine {
    A = 0,
    B = 1,
}

impl From<MachoptMachine> for MachineId {
    fn from(m: MachoptMachine) -> Self {
        match m {
            MachoptMachine::A => MachineId::A,
            MachoptMachine::B => MachineId::B,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachoptMetric {
    Relative = 0,
    Euclidean = 1,
    Log = 2,
}

impl From<MachoptMetric> for Metric {
    fn from(m: MachoptMetric) -> Self {
        match m {
            MachoptMetric::Relative => Metric::Relative,
            MachoptMetric::Euclidean => Metric::Euclidean,
            MachoptMetric::Log => Metric::Log,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachoptScale {
    Coded = 0,
    Raw = 1,
}

impl From<MachoptScale> for CovariateScale {
    fn from(s: MachoptScale) -> Self {
        match s {
            MachoptScale::Coded => CovariateScale::Coded,
            MachoptScale::Raw => CovariateScale::Raw,
        }
    }
}

/// Optimal operating point for one machine.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MachoptOptimum {
    /// Depth, feed and spindle settings in raw units.
    pub e_star: [f64; 3],
    pub roughness: f64,
    pub power: f64,
    pub distance: f64,
    pub generation_found: usize,
    pub evaluations: usize,
}

/// Validated experimental runs over the default factor levels.
pub struct MachoptDataset {
    inner: Dataset,
}

/// Posterior draws together with the covariate scale they were fitted on.
pub struct MachoptDraws {
    inner: PosteriorDraws,
    scale: CovariateScale,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MachoptStatus {
    match err.kind() {
        ErrorKind::Validation => MachoptStatus::Validation,
        ErrorKind::Numerical => MachoptStatus::Numerical,
        ErrorKind::MissingArtifact => MachoptStatus::MissingArtifact,
        ErrorKind::Io => MachoptStatus::Io,
    }
}

enum Failure {
    Arg(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MachoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MachoptStatus::Ok,
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(msg.to_string());
            MachoptStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            MachoptStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg("null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg("string argument is not UTF-8"))
}

unsafe fn ref_arg<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Arg("null handle"))
}

fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or(Failure::Arg("null output pointer"))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn machopt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a dataset CSV (`machine,x1,x2,x3,roughness,power`).
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn machopt_dataset_parse(csv: *const c_char, out: *mut *mut MachoptDataset) -> MachoptStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let text = str_arg(csv)?;
        let inner = parse_dataset(text, &machining_factors())?;
        *out = Box::into_raw(Box::new(MachoptDataset { inner }));
        Ok(())
    })
}

/// Number of runs, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn machopt_dataset_len(ds: *const MachoptDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn machopt_dataset_free(ds: *mut MachoptDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits the SUR model with the default prior.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn machopt_fit(
    ds: *const MachoptDataset,
    scale: MachoptScale,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    chains: usize,
    seed: u64,
    out: *mut *mut MachoptDraws,
) -> MachoptStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let ds = ref_arg(ds)?;
        let scale = CovariateScale::from(scale);
        let design = build_design(&ds.inner, scale)?;
        let config = McmcConfig {
            iterations,
            burn_in,
            thin,
            chains,
            seed,
        };
        let fit = run_chain(&design, &Prior::default(), &config)?;
        *out = Box::into_raw(Box::new(MachoptDraws { inner: fit.draws, scale }));
        Ok(())
    })
}

/// Loads draws from their CSV export.
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn machopt_draws_from_csv(
    csv: *const c_char,
    scale: MachoptScale,
    out: *mut *mut MachoptDraws,
) -> MachoptStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let inner = PosteriorDraws::from_csv(str_arg(csv)?)?;
        *out = Box::into_raw(Box::new(MachoptDraws {
            inner,
            scale: scale.into(),
        }));
        Ok(())
    })
}

/// Serializes draws to CSV. Free the string with `machopt_string_free`.
///
/// # Safety
/// `draws` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn machopt_draws_to_csv(draws: *const MachoptDraws, out: *mut *mut c_char) -> MachoptStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let draws = ref_arg(draws)?;
        let csv = CString::new(draws.inner.to_csv()).expect("CSV has no NUL");
        *out = csv.into_raw();
        Ok(())
    })
}

/// Number of retained draws, or 0 for NULL.
///
/// # Safety
/// `draws` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn machopt_draws_len(draws: *const MachoptDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `draws` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn machopt_draws_free(draws: *mut MachoptDraws) {
    if !draws.is_null() {
        drop(Box::from_raw(draws));
    }
}

fn predictor(draws: &MachoptDraws) -> Result<Predictor, Error> {
    let coding = Coding::new(&machining_factors(), draws.scale);
    Predictor::new(&draws.inner, coding, PredictionMode::PosteriorMean)
}

/// Posterior-mean prediction at raw settings `e[0..3]`.
///
/// # Safety
/// `draws` must be a live handle, `e` must point to 3 doubles, and the
/// output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn machopt_predict_point(
    draws: *const MachoptDraws,
    machine: MachoptMachine,
    e: *const f64,
    out_roughness: *mut f64,
    out_power: *mut f64,
) -> MachoptStatus {
    guard(|| {
        let draws = ref_arg(draws)?;
        if e.is_null() {
            return Err(Failure::Arg("null operating point"));
        }
        let e: [f64; 3] = std::slice::from_raw_parts(e, 3).try_into().expect("length 3");
        let (r, p) = (out_arg(out_roughness)?, out_arg(out_power)?);
        let pred = predictor(draws)?.predict(e, machine.into());
        *r = pred.roughness;
        *p = pred.power;
        Ok(())
    })
}

/// Hybrid genetic / quasi-Newton search with default settings.
///
/// # Safety
/// `draws` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn machopt_optimize(
    draws: *const MachoptDraws,
    machine: MachoptMachine,
    ymin_power: f64,
    ymin_roughness: f64,
    metric: MachoptMetric,
    seed: u64,
    out: *mut MachoptOptimum,
) -> MachoptStatus {
    guard(|| {
        let out = out_arg(out)?;
        let draws = ref_arg(draws)?;
        let predictor = predictor(draws)?;
        let ymin = ThresholdVector::new(ymin_power, ymin_roughness)?;
        let space = SearchSpace::from_coding(predictor.coding())?;
        let config = GaConfig {
            seed,
            ..GaConfig::default()
        };
        let r = optimize(&predictor, machine.into(), &ymin, metric.into(), &space, &config)?;
        *out = MachoptOptimum {
            e_star: r.e_star,
            roughness: r.predicted.roughness,
            power: r.predicted.power,
            distance: r.distance,
            generation_found: r.generation_found,
            evaluations: r.evaluations,
        };
        Ok(())
    })
}

/// Highest-density interval of `n` samples containing `mass`.
///
/// # Safety
/// `samples` must point to `n` doubles; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn machopt_hdi(
    samples: *const f64,
    n: usize,
    mass: f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> MachoptStatus {
    guard(|| {
        if samples.is_null() {
            return Err(Failure::Arg("null samples"));
        }
        let (lo, hi) = (out_arg(out_lower)?, out_arg(out_upper)?);
        let interval = hdi(std::slice::from_raw_parts(samples, n), mass)?;
        *lo = interval.lower;
        *hi = interval.upper;
        Ok(())
    })
}

/// Finite-population standard deviation of `k >= 2` effects.
///
/// # Safety
/// `alpha` must point to `k` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn machopt_finite_pop_sd(alpha: *const f64, k: usize, out: *mut f64) -> MachoptStatus {
    guard(|| {
        if alpha.is_null() {
            return Err(Failure::Arg("null effects"));
        }
        let out = out_arg(out)?;
        if k < 2 {
            return Err(Error::invalid("at least two effects required").into());
        }
        *out = finite_pop_sd_single(std::slice::from_raw_parts(alpha, k));
        Ok(())
    })
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn machopt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
