//! C ABI over the `loadrank` library.
//!
//! Every fallible function returns an [`LrStatus`]; on failure a message is
//! stored per thread and can be read with [`lr_last_error_message`]. Handles
//! are opaque and must be released with the matching `_free` function.
//! Panics never cross the boundary; they surface as `LR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use loadrank::data::{build_dataset, load_table, Dataset, MappingScheme, MissingPolicy, RatingMapping};
use loadrank::fa::FaOutcome;
use loadrank::pca::FeatureRanking;
use loadrank::pipeline::{prepare_dataset, rank, run_pipeline, RunConfig};
use loadrank::stats::{chi_square_p, eigen_sym_with};
use loadrank::Error;
use ndarray::Array2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    DegenerateData = 6,
    NumericalFailure = 7,
    NotApplicable = 8,
    EmptySelection = 9,
    BufferTooSmall = 10,
    IndexOutOfRange = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrMapping {
    Detailed = 0,
    Coarse = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrMethod {
    PcaAbs = 0,
    PcaSquare = 1,
    FactorPriority = 2,
}

/// Ranking parameters; obtain defaults from [`lr_rank_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrRankOptions {
    /// Chi-square prefilter significance level.
    pub alpha: f64,
    /// Quantile bins used by the prefilter.
    pub n_bins: usize,
    /// Cumulative explained-variance target for component retention.
    pub variance_threshold: f64,
    /// Minimum absolute rotated loading for a factor assignment.
    pub loading_threshold: f64,
}

/// Opaque labelled feature matrix.
pub struct LrDataset {
    inner: Dataset,
}

/// Opaque feature ranking.
pub struct LrRanking {
    names: Vec<CString>,
    scores: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> LrStatus {
    match err {
        Error::Io { .. } => LrStatus::Io,
        Error::Csv(_)
        | Error::RaggedRow { .. }
        | Error::DuplicateHeader(_)
        | Error::MissingHeader
        | Error::UnmappedRating(_)
        | Error::MissingTarget(_)
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::Config(_) => LrStatus::Parse,
        Error::InvalidArgument(_)
        | Error::Stratification { .. }
        | Error::FeatureMismatch { .. }
        | Error::UnknownFeature(_) => LrStatus::InvalidArgument,
        Error::EmptyDataset | Error::DegenerateData(_) | Error::NonFinite => LrStatus::DegenerateData,
        Error::NumericalFailure { .. } | Error::Invariant(_) => LrStatus::NumericalFailure,
        Error::NotTestable(_) | Error::NotApplicable(_) => LrStatus::NotApplicable,
        Error::EmptySelection(_) => LrStatus::EmptySelection,
    }
}

/// Runs `f`, records any error or panic, and returns the status.
fn guard(f: impl FnOnce() -> Result<(), LrStatus>) -> LrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LrStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            LrStatus::Panic
        }
    }
}

fn fail(err: Error) -> LrStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn fail_with(status: LrStatus, msg: &str) -> LrStatus {
    set_error(msg);
    status
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, LrStatus> {
    if p.is_null() {
        return Err(fail_with(LrStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail_with(LrStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), LrStatus> {
    if p.is_null() {
        Err(fail_with(LrStatus::NullPointer, &format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Copies `s` with a trailing NUL into `buf`. `written` receives the size
/// required including the NUL, also when the buffer is too small.
unsafe fn copy_out(s: &CStr, buf: *mut c_char, capacity: usize, written: *mut usize) -> Result<(), LrStatus> {
    let bytes = s.to_bytes_with_nul();
    if !written.is_null() {
        *written = bytes.len();
    }
    if buf.is_null() || capacity < bytes.len() {
        return Err(fail_with(LrStatus::BufferTooSmall, "output buffer too small"));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`. Returns
/// `LR_STATUS_OK` with an empty string when no error is recorded.
///
/// # Safety
/// `buf` must be valid for `capacity` bytes; `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn lr_last_error_message(buf: *mut c_char, capacity: usize, written: *mut usize) -> LrStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone()).unwrap_or_default();
    match copy_out(&msg, buf, capacity, written) {
        Ok(()) => LrStatus::Ok,
        Err(s) => s,
    }
}

/// Loads a delimited file whose `target` column holds rating strings.
/// Rows with missing cells are dropped.
///
/// # Safety
/// `path` and `target` must be NUL-terminated strings; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_load_csv(
    path: *const c_char,
    target: *const c_char,
    delimiter: c_char,
    mapping: LrMapping,
    out: *mut *mut LrDataset,
) -> LrStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = read_str(path, "path")?;
        let target = read_str(target, "target")?;
        let scheme = match mapping {
            LrMapping::Detailed => MappingScheme::Detailed,
            LrMapping::Coarse => MappingScheme::Coarse,
        };
        let table = load_table(path, delimiter as u8 as char).map_err(fail)?;
        let ds = build_dataset(&table, target, &RatingMapping::new(scheme), MissingPolicy::DropRow).map_err(fail)?;
        *out = Box::into_raw(Box::new(LrDataset { inner: ds }));
        Ok(())
    })
}

/// Builds a dataset from a row-major `n_samples × n_features` matrix and
/// integer class labels. Features are named `f0`, `f1`, ...
///
/// # Safety
/// `values` must hold `n_samples * n_features` doubles, `labels`
/// `n_samples` integers; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_from_matrix(
    values: *const f64,
    n_samples: usize,
    n_features: usize,
    labels: *const u32,
    out: *mut *mut LrDataset,
) -> LrStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(values, "values")?;
        non_null(labels, "labels")?;
        let len = n_samples
            .checked_mul(n_features)
            .ok_or_else(|| fail_with(LrStatus::InvalidArgument, "matrix size overflows"))?;
        let x = std::slice::from_raw_parts(values, len).to_vec();
        let y = std::slice::from_raw_parts(labels, n_samples).to_vec();
        let x = Array2::from_shape_vec((n_samples, n_features), x)
            .map_err(|e| fail_with(LrStatus::InvalidArgument, &e.to_string()))?;
        let names = (0..n_features).map(|j| format!("f{j}")).collect();
        let ds = Dataset::new(names, x, y).map_err(fail)?;
        *out = Box::into_raw(Box::new(LrDataset { inner: ds }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_free(dataset: *mut LrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_n_samples(dataset: *const LrDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.n_samples())
}

/// # Safety
/// `dataset` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_n_features(dataset: *const LrDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.n_features())
}

#[no_mangle]
pub extern "C" fn lr_rank_options_default() -> LrRankOptions {
    let cfg = RunConfig::default();
    LrRankOptions {
        alpha: cfg.alpha,
        n_bins: cfg.n_bins,
        variance_threshold: cfg.variance_threshold,
        loading_threshold: cfg.loading_threshold,
    }
}

/// Standardizes, prefilters and ranks the features of `dataset`. The factor
/// method returns `LR_STATUS_NOT_APPLICABLE` when the adequacy gate fails.
///
/// # Safety
/// `dataset` must be a live handle; `options` may be null for defaults;
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lr_rank(
    dataset: *const LrDataset,
    method: LrMethod,
    options: *const LrRankOptions,
    out: *mut *mut LrRanking,
) -> LrStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(dataset, "dataset")?;
        let opts = options.as_ref().copied().unwrap_or_else(|| lr_rank_options_default());
        let cfg = RunConfig {
            alpha: opts.alpha,
            n_bins: opts.n_bins,
            variance_threshold: opts.variance_threshold,
            loading_threshold: opts.loading_threshold,
            ..RunConfig::default()
        };
        let prepared = prepare_dataset(&(*dataset).inner, &cfg).map_err(fail)?;
        let rankings = rank(&prepared, &cfg).map_err(fail)?;
        let ranking: FeatureRanking = match method {
            LrMethod::PcaAbs => rankings.pca_abs,
            LrMethod::PcaSquare => rankings.pca_square,
            LrMethod::FactorPriority => match rankings.fa {
                FaOutcome::Fitted { model, .. } => model.ranking,
                FaOutcome::GateFailed { .. } => {
                    return Err(fail_with(LrStatus::NotApplicable, "factor-analysis adequacy gate failed"))
                }
                FaOutcome::EmptySelection { .. } => {
                    return Err(fail_with(LrStatus::EmptySelection, "no feature loads on any factor"))
                }
            },
        };
        let names = ranking
            .ranked_names()
            .into_iter()
            .map(|n| CString::new(n.replace('\0', " ")).expect("NUL removed"))
            .collect();
        *out = Box::into_raw(Box::new(LrRanking {
            names,
            scores: ranking.scores,
        }));
        Ok(())
    })
}

/// # Safety
/// `ranking` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lr_ranking_free(ranking: *mut LrRanking) {
    if !ranking.is_null() {
        drop(Box::from_raw(ranking));
    }
}

/// # Safety
/// `ranking` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn lr_ranking_len(ranking: *const LrRanking) -> usize {
    ranking.as_ref().map_or(0, |r| r.names.len())
}

/// Score of the feature at 0-based rank `index`.
///
/// # Safety
/// `ranking` must be a live handle; `score` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lr_ranking_score(ranking: *const LrRanking, index: usize, score: *mut f64) -> LrStatus {
    guard(|| {
        non_null(ranking, "ranking")?;
        non_null(score, "score")?;
        let r = &*ranking;
        *score = *r
            .scores
            .get(index)
            .ok_or_else(|| fail_with(LrStatus::IndexOutOfRange, "rank index out of range"))?;
        Ok(())
    })
}

/// Name of the feature at 0-based rank `index`, NUL-terminated.
///
/// # Safety
/// `ranking` must be a live handle; `buf` must be valid for `capacity`
/// bytes; `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn lr_ranking_feature_name(
    ranking: *const LrRanking,
    index: usize,
    buf: *mut c_char,
    capacity: usize,
    written: *mut usize,
) -> LrStatus {
    guard(|| {
        non_null(ranking, "ranking")?;
        let r = &*ranking;
        let name = r
            .names
            .get(index)
            .ok_or_else(|| fail_with(LrStatus::IndexOutOfRange, "rank index out of range"))?;
        copy_out(name, buf, capacity, written)
    })
}

/// Runs the full experiment described by a TOML config file and writes its
/// outputs to the configured directory.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lr_run_pipeline(config_path: *const c_char) -> LrStatus {
    guard(|| {
        let path = read_str(config_path, "config_path")?;
        let cfg = RunConfig::load(path).map_err(fail)?;
        run_pipeline(&cfg).map_err(fail)?;
        Ok(())
    })
}

/// Eigendecomposition of a symmetric row-major `dim × dim` matrix.
/// Eigenvalues are written in descending order; column `j` of the row-major
/// `eigenvectors` output pairs with `eigenvalues[j]`.
///
/// # Safety
/// `matrix` and `eigenvectors` must hold `dim * dim` doubles,
/// `eigenvalues` `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn lr_eigen_symmetric(
    matrix: *const f64,
    dim: usize,
    eigenvalues: *mut f64,
    eigenvectors: *mut f64,
) -> LrStatus {
    guard(|| {
        non_null(matrix, "matrix")?;
        non_null(eigenvalues, "eigenvalues")?;
        non_null(eigenvectors, "eigenvectors")?;
        let len = dim
            .checked_mul(dim)
            .ok_or_else(|| fail_with(LrStatus::InvalidArgument, "matrix size overflows"))?;
        let m = Array2::from_shape_vec((dim, dim), std::slice::from_raw_parts(matrix, len).to_vec())
            .map_err(|e| fail_with(LrStatus::InvalidArgument, &e.to_string()))?;
        let eig = eigen_sym_with(&m, 100).map_err(fail)?;
        let vals = std::slice::from_raw_parts_mut(eigenvalues, dim);
        vals.copy_from_slice(eig.eigenvalues.as_slice().expect("contiguous"));
        let vecs = std::slice::from_raw_parts_mut(eigenvectors, len);
        for (dst, src) in vecs.iter_mut().zip(eig.eigenvectors.iter()) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Upper-tail probability of the chi-square distribution.
///
/// # Safety
/// `p_value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lr_chi_square_p(statistic: f64, dof: usize, p_value: *mut f64) -> LrStatus {
    guard(|| {
        non_null(p_value, "p_value")?;
        *p_value = chi_square_p(statistic, dof).map_err(fail)?;
        Ok(())
    })
}
