//! C ABI for the covboot tests.
//!
//! Callers work with two opaque handle types: `CovbootSeries` (a
//! functional time series on a midpoint grid) and `CovbootReport` (the
//! outcome of a test). Every function that can fail returns a
//! `CovbootStatus`; results are passed back through out-pointers, which
//! are written only on `Ok`. Handles must be released with the matching
//! `_free` function exactly once; all functions tolerate `NULL` handles by
//! returning `NullArgument` instead of crashing. Panics are caught at the
//! boundary and surface as `Internal`.
//!
//! The generated header is written to `include/covboot.h` at build time.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use covboot::bootstrap::adaptive_block_length;
use covboot::bootstrap::BandwidthConfig;
use covboot::fspace::{FunctionalSeries, Grid, HSOperator};
use covboot::htest::{
    changepoint_test, cross_covariance_test, one_sample_test, BlockLength, ChangepointReport,
    CusumStat, TestConfig, TestReport,
};
use covboot::Error;

/// Result of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovbootStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A value was out of range or otherwise invalid.
    InvalidArgument = 2,
    /// Grid sizes or series lengths do not fit together.
    Dimension = 3,
    /// Malformed CSV input.
    Parse = 4,
    /// File system failure.
    Io = 5,
    /// Unexpected internal failure.
    Internal = 6,
}

/// CUSUM functional selector for the changepoint test.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovbootCusumStat {
    /// Maximum bridge norm.
    Cs = 0,
    /// Average squared bridge norm.
    Ci = 1,
}

/// Test options. Obtain defaults from `covboot_test_options_default` and
/// override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CovbootTestOptions {
    /// RNG seed for the bootstrap.
    pub seed: u64,
    /// Number of bootstrap replicates.
    pub replicates: u64,
    /// Fixed block length; any value <= 0 selects the adaptive rule.
    pub block_length: i64,
}

/// A functional time series handle.
pub struct CovbootSeries {
    inner: FunctionalSeries,
}

enum ReportInner {
    Test(TestReport),
    Changepoint(ChangepointReport),
}

/// A test outcome handle.
pub struct CovbootReport {
    inner: ReportInner,
}

impl CovbootReport {
    fn test(&self) -> &TestReport {
        match &self.inner {
            ReportInner::Test(t) => t,
            ReportInner::Changepoint(c) => &c.test,
        }
    }
}

fn status_of(err: &Error) -> CovbootStatus {
    match err {
        Error::GridMismatch(_) => CovbootStatus::Dimension,
        Error::InvalidArgument(_) | Error::NonFinite(_) => CovbootStatus::InvalidArgument,
        Error::Parse(_) => CovbootStatus::Parse,
        Error::Io(_) => CovbootStatus::Io,
        Error::Json(_) => CovbootStatus::Internal,
    }
}

/// Run `body` with panics converted to `Internal`.
fn guarded(body: impl FnOnce() -> CovbootStatus) -> CovbootStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(CovbootStatus::Internal)
}

fn options_or_default(options: *const CovbootTestOptions) -> CovbootTestOptions {
    if options.is_null() {
        default_options()
    } else {
        unsafe { *options }
    }
}

fn default_options() -> CovbootTestOptions {
    CovbootTestOptions { seed: 0, replicates: 1000, block_length: 0 }
}

fn test_config(options: &CovbootTestOptions) -> TestConfig {
    TestConfig {
        replicates: options.replicates as usize,
        block: if options.block_length <= 0 {
            BlockLength::Adaptive
        } else {
            BlockLength::Fixed(options.block_length as usize)
        },
        seed: options.seed,
        ..TestConfig::default()
    }
}

/// Default test options: seed 0, 1000 replicates, adaptive block length.
#[no_mangle]
pub extern "C" fn covboot_test_options_default() -> CovbootTestOptions {
    default_options()
}

/// Build a series from a row-major `n` x `m` array of values on the
/// midpoint grid with `m` nodes.
///
/// # Safety
/// `data` must point to at least `n * m` readable doubles and `out` must
/// be a valid pointer; `*out` is written only on `Ok`.
#[no_mangle]
pub unsafe extern "C" fn covboot_series_from_rows(
    data: *const f64,
    n: usize,
    m: usize,
    out: *mut *mut CovbootSeries,
) -> CovbootStatus {
    if data.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    guarded(|| {
        if n == 0 || m == 0 {
            return CovbootStatus::InvalidArgument;
        }
        let values = unsafe { std::slice::from_raw_parts(data, n * m) }.to_vec();
        let grid = match Grid::new(m) {
            Ok(g) => g,
            Err(e) => return status_of(&e),
        };
        match FunctionalSeries::new(grid, values) {
            Ok(series) => {
                unsafe { *out = Box::into_raw(Box::new(CovbootSeries { inner: series })) };
                CovbootStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Read a series from a CSV file written by the library or the CLI.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid
/// pointer; `*out` is written only on `Ok`.
#[no_mangle]
pub unsafe extern "C" fn covboot_series_read_csv(
    path: *const c_char,
    out: *mut *mut CovbootSeries,
) -> CovbootStatus {
    if path.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    guarded(|| {
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(p) => p,
            Err(_) => return CovbootStatus::InvalidArgument,
        };
        match FunctionalSeries::read_csv(path) {
            Ok(series) => {
                unsafe { *out = Box::into_raw(Box::new(CovbootSeries { inner: series })) };
                CovbootStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Number of observations, or 0 for a NULL handle.
///
/// # Safety
/// `series` must be NULL or a live series handle.
#[no_mangle]
pub unsafe extern "C" fn covboot_series_len(series: *const CovbootSeries) -> usize {
    if series.is_null() {
        return 0;
    }
    unsafe { &*series }.inner.len()
}

/// Number of grid nodes, or 0 for a NULL handle.
///
/// # Safety
/// `series` must be NULL or a live series handle.
#[no_mangle]
pub unsafe extern "C" fn covboot_series_grid_len(series: *const CovbootSeries) -> usize {
    if series.is_null() {
        return 0;
    }
    unsafe { &*series }.inner.grid().m()
}

/// Release a series handle. NULL is a no-op.
///
/// # Safety
/// `series` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn covboot_series_free(series: *mut CovbootSeries) {
    if !series.is_null() {
        drop(unsafe { Box::from_raw(series) });
    }
}

/// Test two paired series for zero cross-covariance. `options` may be
/// NULL for defaults.
///
/// # Safety
/// `x` and `y` must be live series handles, `out` a valid pointer;
/// `*out` is written only on `Ok`.
#[no_mangle]
pub unsafe extern "C" fn covboot_cross_test(
    x: *const CovbootSeries,
    y: *const CovbootSeries,
    options: *const CovbootTestOptions,
    out: *mut *mut CovbootReport,
) -> CovbootStatus {
    if x.is_null() || y.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    guarded(|| {
        let cfg = test_config(&options_or_default(options));
        match cross_covariance_test(&unsafe { &*x }.inner, &unsafe { &*y }.inner, &cfg) {
            Ok(report) => {
                let handle = CovbootReport { inner: ReportInner::Test(report) };
                unsafe { *out = Box::into_raw(Box::new(handle)) };
                CovbootStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Test the covariance of `x` against a null kernel given row-major with
/// `kernel_len == m * m` entries; a NULL kernel means the zero operator.
///
/// # Safety
/// `x` must be a live series handle; `kernel` NULL or `kernel_len`
/// readable doubles; `out` valid; `*out` written only on `Ok`.
#[no_mangle]
pub unsafe extern "C" fn covboot_one_sample_test(
    x: *const CovbootSeries,
    kernel: *const f64,
    kernel_len: usize,
    options: *const CovbootTestOptions,
    out: *mut *mut CovbootReport,
) -> CovbootStatus {
    if x.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    guarded(|| {
        let series = &unsafe { &*x }.inner;
        let grid = series.grid();
        let v0 = if kernel.is_null() {
            HSOperator::zeros(grid, grid)
        } else {
            if kernel_len != grid.m() * grid.m() {
                return CovbootStatus::Dimension;
            }
            let values = unsafe { std::slice::from_raw_parts(kernel, kernel_len) }.to_vec();
            match HSOperator::new(grid, grid, values) {
                Ok(op) => op,
                Err(e) => return status_of(&e),
            }
        };
        let cfg = test_config(&options_or_default(options));
        match one_sample_test(series, &v0, &cfg) {
            Ok(report) => {
                let handle = CovbootReport { inner: ReportInner::Test(report) };
                unsafe { *out = Box::into_raw(Box::new(handle)) };
                CovbootStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Test `x` for a covariance changepoint with the chosen CUSUM
/// functional.
///
/// # Safety
/// `x` must be a live series handle, `out` valid; `*out` written only on
/// `Ok`.
#[no_mangle]
pub unsafe extern "C" fn covboot_changepoint_test(
    x: *const CovbootSeries,
    statistic: CovbootCusumStat,
    options: *const CovbootTestOptions,
    out: *mut *mut CovbootReport,
) -> CovbootStatus {
    if x.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    guarded(|| {
        let stat = match statistic {
            CovbootCusumStat::Cs => CusumStat::Cs,
            CovbootCusumStat::Ci => CusumStat::Ci,
        };
        let cfg = test_config(&options_or_default(options));
        match changepoint_test(&unsafe { &*x }.inner, stat, &cfg) {
            Ok(report) => {
                let handle = CovbootReport { inner: ReportInner::Changepoint(report) };
                unsafe { *out = Box::into_raw(Box::new(handle)) };
                CovbootStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Plug-in adaptive block length of a series.
///
/// # Safety
/// `series` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn covboot_adaptive_block_length(
    series: *const CovbootSeries,
    out: *mut usize,
) -> CovbootStatus {
    if series.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    guarded(|| {
        match adaptive_block_length(&unsafe { &*series }.inner, &BandwidthConfig::default()) {
            Ok(p) => {
                unsafe { *out = p };
                CovbootStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Observed test statistic; NaN for a NULL handle.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn covboot_report_statistic(report: *const CovbootReport) -> f64 {
    if report.is_null() {
        return f64::NAN;
    }
    unsafe { &*report }.test().statistic
}

/// Bootstrap p-value; NaN for a NULL handle.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn covboot_report_p_value(report: *const CovbootReport) -> f64 {
    if report.is_null() {
        return f64::NAN;
    }
    unsafe { &*report }.test().p_value
}

/// Block length the test actually used; 0 for a NULL handle.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn covboot_report_block_length(report: *const CovbootReport) -> usize {
    if report.is_null() {
        return 0;
    }
    unsafe { &*report }.test().block_length
}

/// Bootstrap critical value at one of the report's levels (the defaults
/// are 0.01, 0.05 and 0.10).
///
/// # Safety
/// `report` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn covboot_report_critical_value(
    report: *const CovbootReport,
    level: f64,
    out: *mut f64,
) -> CovbootStatus {
    if report.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    match unsafe { &*report }.test().critical_value_at(level) {
        Some(v) => {
            unsafe { *out = v };
            CovbootStatus::Ok
        }
        None => CovbootStatus::InvalidArgument,
    }
}

/// Estimated number of pre-change rows. Fails with `InvalidArgument` for
/// reports of the other tests.
///
/// # Safety
/// `report` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn covboot_report_changepoint(
    report: *const CovbootReport,
    out: *mut usize,
) -> CovbootStatus {
    if report.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    match &unsafe { &*report }.inner {
        ReportInner::Changepoint(c) => {
            unsafe { *out = c.k_hat };
            CovbootStatus::Ok
        }
        ReportInner::Test(_) => CovbootStatus::InvalidArgument,
    }
}

/// Render the full report as a JSON string. Release the string with
/// `covboot_string_free`.
///
/// # Safety
/// `report` must be a live report handle and `out` a valid pointer;
/// `*out` is written only on `Ok`.
#[no_mangle]
pub unsafe extern "C" fn covboot_report_to_json(
    report: *const CovbootReport,
    out: *mut *mut c_char,
) -> CovbootStatus {
    if report.is_null() || out.is_null() {
        return CovbootStatus::NullArgument;
    }
    guarded(|| {
        let value = match &unsafe { &*report }.inner {
            ReportInner::Test(t) => t.to_json(),
            ReportInner::Changepoint(c) => c.to_json(),
        };
        let text = value.to_string();
        match CString::new(text) {
            Ok(c) => {
                unsafe { *out = c.into_raw() };
                CovbootStatus::Ok
            }
            Err(_) => CovbootStatus::Internal,
        }
    })
}

/// Release a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a string obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn covboot_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Release a report handle. NULL is a no-op.
///
/// # Safety
/// `report` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn covboot_report_free(report: *mut CovbootReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}
