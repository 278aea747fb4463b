//! C ABI for the `mcmarg` library.
//!
//! Every function returns an [`McmStatus`]. On failure a description is
//! available from [`mcm_last_error_message`] on the same thread. Models and
//! sample batches are opaque handles owned by the caller and released with
//! their `_free` function. Arrays are row-major `double` buffers whose
//! lengths follow from the handle's dimensions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mcmarg::baselines::{em_fit, holdout_loglik, sliced_kl_eval};
use mcmarg::io::{load_model, save_model};
use mcmarg::mcmarg::{fit_gmm, fit_samples};
use mcmarg::rng::{purpose, substream};
use mcmarg::{marginalize, sample_gmm, Bandwidth, Error, ErrorKind, FitConfig, GmmModel, SampleBatch, UnitVector};

/// Result codes. The first four match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McmStatus {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Opaque Gaussian mixture model.
pub struct McmGmm(GmmModel);

/// Opaque batch of samples, `count × dim`.
pub struct McmSamples(SampleBatch);

/// Fitting options. Obtain defaults from [`mcm_fit_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct McmFitConfig {
    pub components: usize,
    pub steps: usize,
    pub vectors_per_step: usize,
    pub learning_rate: f64,
    /// Kernel bandwidth; ignored when `silverman_bandwidth` is set.
    pub bandwidth: f64,
    pub silverman_bandwidth: bool,
    pub grid_bins: usize,
    pub grid_padding: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl From<&FitConfig> for McmFitConfig {
    fn from(c: &FitConfig) -> Self {
        let (bandwidth, silverman) = match c.bandwidth {
            Bandwidth::Fixed(h) => (h, false),
            Bandwidth::Silverman => (0.0, true),
        };
        Self {
            components: c.components,
            steps: c.steps,
            vectors_per_step: c.vectors_per_step,
            learning_rate: c.learning_rate,
            bandwidth,
            silverman_bandwidth: silverman,
            grid_bins: c.grid_bins,
            grid_padding: c.grid_padding,
            seed: c.seed,
            adam_beta1: c.adam_beta1,
            adam_beta2: c.adam_beta2,
            adam_epsilon: c.adam_epsilon,
        }
    }
}

impl From<&McmFitConfig> for FitConfig {
    fn from(c: &McmFitConfig) -> Self {
        Self {
            components: c.components,
            steps: c.steps,
            vectors_per_step: c.vectors_per_step,
            learning_rate: c.learning_rate,
            bandwidth: if c.silverman_bandwidth { Bandwidth::Silverman } else { Bandwidth::Fixed(c.bandwidth) },
            grid_bins: c.grid_bins,
            grid_padding: c.grid_padding,
            seed: c.seed,
            adam_beta1: c.adam_beta1,
            adam_beta2: c.adam_beta2,
            adam_epsilon: c.adam_epsilon,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult) -> McmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McmStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            McmStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            match e.kind() {
                ErrorKind::Usage => McmStatus::Usage,
                ErrorKind::Data => McmStatus::Data,
                ErrorKind::Numerical => McmStatus::Numerical,
            }
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            McmStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `values` into `out` when `out` is non-null.
unsafe fn write_optional(out: *mut f64, values: &[f64]) {
    if !out.is_null() && !values.is_empty() {
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> FfiResult<&'a Path> {
    let s = borrow(p, "path")?;
    let s = CStr::from_ptr(s).to_str().map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(Failure::Null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mcm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a mixture from `k` weights, `k × dim` means and `k` row-major
/// `dim × dim` covariances.
///
/// # Safety
/// Array pointers must be valid for the lengths above; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_from_moments(
    dim: usize,
    k: usize,
    weights: *const f64,
    means: *const f64,
    covariances: *const f64,
    out: *mut *mut McmGmm,
) -> McmStatus {
    guard(|| {
        if dim == 0 || k == 0 {
            return Err(Error::InvalidArgument("dim and k must be >= 1".into()).into());
        }
        let w = slice(weights, k, "weights")?;
        let m = slice(means, k * dim, "means")?;
        let c = slice(covariances, k * dim * dim, "covariances")?;
        put(out, McmGmm(GmmModel::from_moments(w, m, c)?))
    })
}

/// # Safety
/// `gmm` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_free(gmm: *mut McmGmm) {
    if !gmm.is_null() {
        drop(Box::from_raw(gmm));
    }
}

/// Dimension of the model, or 0 for a null handle.
///
/// # Safety
/// `gmm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_dim(gmm: *const McmGmm) -> usize {
    gmm.as_ref().map_or(0, |g| g.0.dim())
}

/// Component count, or 0 for a null handle.
///
/// # Safety
/// `gmm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_components(gmm: *const McmGmm) -> usize {
    gmm.as_ref().map_or(0, |g| g.0.components())
}

/// Writes weights (`k`), means (`k × dim`) and covariances (`k × dim × dim`).
/// Any output pointer may be null to skip it.
///
/// # Safety
/// Non-null outputs must be writable for the lengths above.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_get_params(
    gmm: *const McmGmm,
    weights_out: *mut f64,
    means_out: *mut f64,
    covariances_out: *mut f64,
) -> McmStatus {
    guard(|| {
        let g = &borrow(gmm, "gmm")?.0;
        write_optional(weights_out, &g.weights());
        write_optional(means_out, g.means());
        let covs: Vec<f64> = (0..g.components()).flat_map(|k| g.covariance(k)).collect();
        write_optional(covariances_out, &covs);
        Ok(())
    })
}

/// Log-density at the point `z` of length `dim`.
///
/// # Safety
/// `z` must hold `dim` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_log_density(gmm: *const McmGmm, z: *const f64, dim: usize, out: *mut f64) -> McmStatus {
    guard(|| {
        let g = &borrow(gmm, "gmm")?.0;
        let z = slice(z, dim, "z")?;
        let v = mcmarg::gmm_log_density(g, z)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = v;
        Ok(())
    })
}

/// 1-D marginal along `direction` (normalized internally): writes `k`
/// weights, means and variances.
///
/// # Safety
/// `direction` must hold `dim` values; outputs must hold `k` values each.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_marginalize(
    gmm: *const McmGmm,
    direction: *const f64,
    dim: usize,
    weights_out: *mut f64,
    means_out: *mut f64,
    variances_out: *mut f64,
) -> McmStatus {
    guard(|| {
        let g = &borrow(gmm, "gmm")?.0;
        let u = UnitVector::normalized(slice(direction, dim, "direction")?.to_vec())?;
        let marginal = marginalize(g, &u)?;
        if weights_out.is_null() || means_out.is_null() || variances_out.is_null() {
            return Err(Failure::Null("marginal output"));
        }
        write_optional(weights_out, marginal.weights());
        write_optional(means_out, marginal.means());
        write_optional(variances_out, marginal.variances());
        Ok(())
    })
}

/// Draws `count` samples with a generator seeded by `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_sample(
    gmm: *const McmGmm,
    count: usize,
    seed: u64,
    out: *mut *mut McmSamples,
) -> McmStatus {
    guard(|| {
        let g = &borrow(gmm, "gmm")?.0;
        let batch = sample_gmm(g, count, &mut substream(seed, purpose::GMM_SAMPLING, 0, 0))?;
        put(out, McmSamples(batch))
    })
}

/// Loads a model from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_load_json(path: *const c_char, out: *mut *mut McmGmm) -> McmStatus {
    guard(|| put(out, McmGmm(load_model(path_arg(path)?)?)))
}

/// Saves a model as JSON.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn mcm_gmm_save_json(gmm: *const McmGmm, path: *const c_char) -> McmStatus {
    guard(|| Ok(save_model(path_arg(path)?, &borrow(gmm, "gmm")?.0)?))
}

/// Copies `count × dim` row-major values into a new batch.
///
/// # Safety
/// `data` must hold `count × dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcm_samples_new(
    data: *const f64,
    count: usize,
    dim: usize,
    out: *mut *mut McmSamples,
) -> McmStatus {
    guard(|| {
        let values = slice(data, count * dim, "data")?;
        put(out, McmSamples(SampleBatch::new(values.to_vec(), count, dim)?))
    })
}

/// # Safety
/// `samples` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcm_samples_free(samples: *mut McmSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

/// # Safety
/// `samples` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcm_samples_count(samples: *const McmSamples) -> usize {
    samples.as_ref().map_or(0, |s| s.0.count())
}

/// # Safety
/// `samples` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcm_samples_dim(samples: *const McmSamples) -> usize {
    samples.as_ref().map_or(0, |s| s.0.dim())
}

/// Copies the batch into `out`, which must hold `len == count × dim` values.
///
/// # Safety
/// `out` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn mcm_samples_copy(samples: *const McmSamples, out: *mut f64, len: usize) -> McmStatus {
    guard(|| {
        let s = &borrow(samples, "samples")?.0;
        if len != s.as_slice().len() {
            return Err(Error::DimensionMismatch { expected: s.as_slice().len(), found: len }.into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        write_optional(out, s.as_slice());
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn mcm_fit_config_default() -> McmFitConfig {
    McmFitConfig::from(&FitConfig::default())
}

/// Fits a mixture to `samples`. When `trace_out` is non-null it receives the
/// loss at each of the `config.steps` steps.
///
/// # Safety
/// `config` must be readable, `out` writable and `trace_out` null or
/// writable for `config.steps` values.
#[no_mangle]
pub unsafe extern "C" fn mcm_fit_gmm(
    samples: *const McmSamples,
    config: *const McmFitConfig,
    out: *mut *mut McmGmm,
    trace_out: *mut f64,
) -> McmStatus {
    guard(|| {
        let s = &borrow(samples, "samples")?.0;
        let config = FitConfig::from(borrow(config, "config")?);
        let report = fit_gmm(s, &config)?;
        write_optional(trace_out, &report.loss_trajectory);
        put(out, McmGmm(report.model))
    })
}

/// Moves `count` randomly initialized samples toward `gmm`.
///
/// # Safety
/// As [`mcm_fit_gmm`].
#[no_mangle]
pub unsafe extern "C" fn mcm_fit_samples(
    gmm: *const McmGmm,
    count: usize,
    config: *const McmFitConfig,
    out: *mut *mut McmSamples,
    trace_out: *mut f64,
) -> McmStatus {
    guard(|| {
        let g = &borrow(gmm, "gmm")?.0;
        let config = FitConfig::from(borrow(config, "config")?);
        let (batch, trace) = fit_samples(g, count, &config)?;
        write_optional(trace_out, &trace);
        put(out, McmSamples(batch))
    })
}

/// Expectation-maximization baseline. `trace_out`, when non-null, receives
/// the mean log-likelihood after each of the `iterations` updates.
///
/// # Safety
/// `out` must be writable; `trace_out` null or writable for `iterations`
/// values.
#[no_mangle]
pub unsafe extern "C" fn mcm_em_fit(
    samples: *const McmSamples,
    components: usize,
    iterations: usize,
    seed: u64,
    out: *mut *mut McmGmm,
    trace_out: *mut f64,
) -> McmStatus {
    guard(|| {
        let s = &borrow(samples, "samples")?.0;
        let (model, trace) = em_fit(s, components, iterations, &mut substream(seed, purpose::EM, 0, 0))?;
        write_optional(trace_out, &trace);
        put(out, McmGmm(model))
    })
}

/// Mean and standard error of the sliced KL over `directions` random
/// directions.
///
/// # Safety
/// `mean_out` and `stderr_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcm_sliced_kl_eval(
    samples: *const McmSamples,
    gmm: *const McmGmm,
    directions: usize,
    bandwidth: f64,
    seed: u64,
    mean_out: *mut f64,
    stderr_out: *mut f64,
) -> McmStatus {
    guard(|| {
        let (mean, stderr) =
            sliced_kl_eval(&borrow(samples, "samples")?.0, &borrow(gmm, "gmm")?.0, directions, bandwidth, seed)?;
        *mean_out.as_mut().ok_or(Failure::Null("mean_out"))? = mean;
        *stderr_out.as_mut().ok_or(Failure::Null("stderr_out"))? = stderr;
        Ok(())
    })
}

/// Mean per-sample log-density of `samples` under `gmm`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcm_holdout_loglik(gmm: *const McmGmm, samples: *const McmSamples, out: *mut f64) -> McmStatus {
    guard(|| {
        let v = holdout_loglik(&borrow(gmm, "gmm")?.0, &borrow(samples, "samples")?.0)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = v;
        Ok(())
    })
}
