//! C interface to burstcast.
//!
//! Objects cross the boundary as opaque handles created by a `bc_*_new` or
//! computing function and released by the matching `bc_*_free`. Every
//! fallible function returns a [`BcStatus`]; on failure the message is
//! available from [`bc_last_error`] on the same thread until the next failing
//! call. Outputs are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use burstcast::bssm::{fit_bssm, predict_one_step, BssmConfig, BssmError};
use burstcast::burst::{annotate_bursts, BurstAnnotation, KleinbergConfig};
use burstcast::eval::{accuracy_report, Stratum};
use burstcast::forecast::ForecastSeries;
use burstcast::series::{summarize, CountSeries};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    OutOfRange = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: BcStatus, message: impl Into<String>) -> BcStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> BcStatus) -> BcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(BcStatus::Panic, "internal panic"),
    }
}

/// Message of the most recent failure on this thread, or NULL. The string
/// is owned by the library and valid until the next failing call here.
#[no_mangle]
pub extern "C" fn bc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Weekly count series.
pub struct BcSeries {
    inner: CountSeries,
}

pub struct BcBursts {
    inner: BurstAnnotation,
}

pub struct BcForecast {
    inner: ForecastSeries,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcSummary {
    pub n_weeks: usize,
    pub total_events: u64,
    pub zero_weeks: usize,
    pub mean: f64,
    pub variance: f64,
    /// NaN when the mean is zero.
    pub dispersion_index: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcBssmConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub credible_level: f64,
}

/// One forecast week. Undefined values are NaN and `defined` is false.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcForecastRow {
    pub week: usize,
    pub actual: u64,
    pub defined: bool,
    pub point: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcAccuracy {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mape_accuracy: f64,
    pub smape_accuracy: f64,
    pub n_weeks: usize,
    pub n_scored: usize,
    pub n_excluded_zero_actual: usize,
}

/// # Safety
/// `ptr` must be NULL or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// Copy `n` counts into a new series handle.
///
/// # Safety
/// `counts` must point to `n` readable values (may be NULL when `n` is 0)
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_series_new(counts: *const u64, n: usize, out: *mut *mut BcSeries) -> BcStatus {
    guard(|| {
        if out.is_null() {
            return fail(BcStatus::NullPointer, "out is NULL");
        }
        let Some(counts) = slice(counts, n) else {
            return fail(BcStatus::NullPointer, "counts is NULL");
        };
        let handle = Box::new(BcSeries {
            inner: CountSeries::new(counts.to_vec(), ""),
        });
        *out = Box::into_raw(handle);
        BcStatus::Ok
    })
}

/// # Safety
/// `series` must be NULL or a handle from [`bc_series_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bc_series_free(series: *mut BcSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// # Safety
/// `series` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_series_summarize(series: *const BcSeries, out: *mut BcSummary) -> BcStatus {
    guard(|| {
        let (Some(s), false) = (series.as_ref(), out.is_null()) else {
            return fail(BcStatus::NullPointer, "series or out is NULL");
        };
        match summarize(&s.inner) {
            Ok(st) => {
                *out = BcSummary {
                    n_weeks: st.n_weeks,
                    total_events: st.total_events,
                    zero_weeks: st.zero_weeks,
                    mean: st.mean,
                    variance: st.variance,
                    dispersion_index: st.dispersion_index.unwrap_or(f64::NAN),
                };
                BcStatus::Ok
            }
            Err(e) => fail(BcStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Kleinberg burst levels with rate ratio `s` and transition cost `gamma`.
///
/// # Safety
/// `series` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_annotate_bursts(
    series: *const BcSeries,
    s: f64,
    gamma: f64,
    out: *mut *mut BcBursts,
) -> BcStatus {
    guard(|| {
        let (Some(series), false) = (series.as_ref(), out.is_null()) else {
            return fail(BcStatus::NullPointer, "series or out is NULL");
        };
        let config = KleinbergConfig {
            s,
            gamma,
            ..KleinbergConfig::default()
        };
        if let Err(e) = config.validate() {
            return fail(BcStatus::InvalidArgument, e.to_string());
        }
        match annotate_bursts(&series.inner, &config) {
            Ok(a) => {
                *out = Box::into_raw(Box::new(BcBursts { inner: a }));
                BcStatus::Ok
            }
            Err(e) => fail(BcStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of annotated weeks; 0 for NULL.
///
/// # Safety
/// `bursts` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bc_bursts_len(bursts: *const BcBursts) -> usize {
    bursts.as_ref().map_or(0, |b| b.inner.week_levels.len())
}

/// Copy the per-week levels (1 = no burst) into `levels`, which holds `cap`
/// entries and must hold at least [`bc_bursts_len`].
///
/// # Safety
/// `bursts` must be a live handle and `levels` must point to `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn bc_bursts_levels(bursts: *const BcBursts, levels: *mut u32, cap: usize) -> BcStatus {
    guard(|| {
        let (Some(b), false) = (bursts.as_ref(), levels.is_null()) else {
            return fail(BcStatus::NullPointer, "bursts or levels is NULL");
        };
        let src = &b.inner.week_levels;
        if cap < src.len() {
            return fail(
                BcStatus::OutOfRange,
                format!("buffer holds {cap} levels, need {}", src.len()),
            );
        }
        for (i, &l) in src.iter().enumerate() {
            *levels.add(i) = l as u32;
        }
        BcStatus::Ok
    })
}

/// # Safety
/// `bursts` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bc_bursts_free(bursts: *mut BcBursts) {
    if !bursts.is_null() {
        drop(Box::from_raw(bursts));
    }
}

/// Default sampler settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_bssm_config_default(out: *mut BcBssmConfig) -> BcStatus {
    if out.is_null() {
        return fail(BcStatus::NullPointer, "out is NULL");
    }
    let d = BssmConfig::default();
    *out = BcBssmConfig {
        chains: d.chains,
        iterations: d.iterations,
        warmup: d.warmup,
        seed: d.seed,
        credible_level: d.credible_level,
    };
    BcStatus::Ok
}

/// Fit the negative-binomial state space model and produce one-week-ahead
/// forecasts for every week. `config` may be NULL for the defaults.
///
/// # Safety
/// `series` must be a live handle, `config` NULL or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_bssm_forecast(
    series: *const BcSeries,
    config: *const BcBssmConfig,
    out: *mut *mut BcForecast,
) -> BcStatus {
    guard(|| {
        let (Some(series), false) = (series.as_ref(), out.is_null()) else {
            return fail(BcStatus::NullPointer, "series or out is NULL");
        };
        let mut c = BssmConfig::default();
        if let Some(user) = config.as_ref() {
            c.chains = user.chains;
            c.iterations = user.iterations;
            c.warmup = user.warmup;
            c.seed = user.seed;
            c.credible_level = user.credible_level;
        }
        let status = |e: BssmError| {
            let s = if e.is_numerical() {
                BcStatus::Numerical
            } else {
                BcStatus::InvalidArgument
            };
            fail(s, e.to_string())
        };
        let samples = match fit_bssm(&series.inner, &c) {
            Ok(s) => s,
            Err(e) => return status(e),
        };
        match predict_one_step(&samples, &series.inner, c.credible_level) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(BcForecast { inner: f }));
                BcStatus::Ok
            }
            Err(e) => status(e),
        }
    })
}

/// Number of forecast weeks; 0 for NULL.
///
/// # Safety
/// `forecast` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bc_forecast_len(forecast: *const BcForecast) -> usize {
    forecast.as_ref().map_or(0, |f| f.inner.rows.len())
}

/// Row `index` (0-based; week `index + 1`).
///
/// # Safety
/// `forecast` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_forecast_row(forecast: *const BcForecast, index: usize, out: *mut BcForecastRow) -> BcStatus {
    guard(|| {
        let (Some(f), false) = (forecast.as_ref(), out.is_null()) else {
            return fail(BcStatus::NullPointer, "forecast or out is NULL");
        };
        let Some(r) = f.inner.rows.get(index) else {
            return fail(
                BcStatus::OutOfRange,
                format!("row {index} out of range for {} rows", f.inner.rows.len()),
            );
        };
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        *out = BcForecastRow {
            week: r.week,
            actual: r.actual,
            defined: r.point.is_some(),
            point: nan(r.point),
            median: nan(r.median),
            lower: nan(r.lower),
            upper: nan(r.upper),
        };
        BcStatus::Ok
    })
}

/// # Safety
/// `forecast` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bc_forecast_free(forecast: *mut BcForecast) {
    if !forecast.is_null() {
        drop(Box::from_raw(forecast));
    }
}

/// Accuracy of `predicted` against `actual` over `n` weeks. NaN predictions
/// mark undefined weeks and are skipped; weeks with zero actual are left
/// out of MAPE and SMAPE.
///
/// # Safety
/// `actual` and `predicted` must each point to `n` readable values and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_accuracy(
    actual: *const u64,
    predicted: *const f64,
    n: usize,
    out: *mut BcAccuracy,
) -> BcStatus {
    guard(|| {
        let (Some(actual), Some(predicted), false) = (slice(actual, n), slice(predicted, n), out.is_null()) else {
            return fail(BcStatus::NullPointer, "actual, predicted or out is NULL");
        };
        let pred: Vec<Option<f64>> = predicted.iter().map(|&p| (!p.is_nan()).then_some(p)).collect();
        match accuracy_report(actual, &pred, &vec![true; n], Stratum::All) {
            Ok(r) => {
                *out = BcAccuracy {
                    mae: r.mae,
                    mse: r.mse,
                    rmse: r.rmse,
                    mape_accuracy: r.mape_accuracy,
                    smape_accuracy: r.smape_accuracy,
                    n_weeks: r.n_weeks,
                    n_scored: r.n_scored,
                    n_excluded_zero_actual: r.n_excluded_zero_actual,
                };
                BcStatus::Ok
            }
            Err(e) => fail(BcStatus::InvalidArgument, e.to_string()),
        }
    })
}
