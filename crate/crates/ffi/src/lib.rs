//! C ABI over the `croms` library.
//!
//! Every function returns a [`CromsStatus`]; on failure a message is kept in
//! thread-local storage and can be read with [`croms_last_error`]. Objects
//! cross the boundary as opaque handles that the caller releases with the
//! matching `_free` function. Strings returned by the library are released
//! with [`croms_string_free`]. Panics are caught and reported as
//! `CROMS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;
use std::sync::Arc;

use croms::cro::{self, PgdConfig, RobustSolution};
use croms::data::LabeledDataset;
use croms::harness::{self, ExperimentConfig, HarnessError};
use croms::loss::{Decision, LossSpec};
use croms::quantile;
use croms::score::{ClassProbabilities, ScoreModel};
use croms::select::{ECroms, FCroms, Problem};
use croms::set::PredictionSet;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CromsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Config = 4,
    Io = 5,
    Panic = 6,
}

/// Which selection procedure a tabular predictor runs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CromsMethod {
    /// Full-conformal selection, exact finite-sample coverage.
    FullConformal = 0,
    /// Selection on the labeled data only, then split conformal.
    Efficient = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CromsStatus, String);

type FfiResult<T> = Result<T, Failure>;

impl From<croms::Error> for Failure {
    fn from(e: croms::Error) -> Self {
        let status = match e {
            croms::Error::NotPositiveDefinite | croms::Error::BudgetExceeded(_) => CromsStatus::Numerical,
            _ => CromsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match e {
            HarnessError::Parse(_) | HarnessError::Invalid { .. } | HarnessError::UnknownPreset(_) => CromsStatus::Config,
            HarnessError::Io(_) | HarnessError::Csv(_) => CromsStatus::Io,
            HarnessError::Run { .. } | HarnessError::Core(_) => CromsStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> CromsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CromsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CromsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CromsStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure(CromsStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or valid for one write.
unsafe fn put<T>(p: *mut T, v: T, what: &str) -> FfiResult<()> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> FfiResult<&'a str> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| bad(format!("{what} is not UTF-8")))
}

fn rows(flat: &[f64], nrows: usize, ncols: usize) -> Vec<Vec<f64>> {
    (0..nrows).map(|r| flat[r * ncols..(r + 1) * ncols].to_vec()).collect()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn croms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn croms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn croms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Empirical quantile: the `ceil(level * len)`-th smallest value, `+inf`
/// when that rank exceeds `len`.
///
/// # Safety
/// `values` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn croms_empirical_quantile(values: *const f64, len: usize, level: f64, out: *mut f64) -> CromsStatus {
    guard(|| {
        let v = input(values, len, "values")?;
        put(out, quantile::empirical_quantile(v, level)?, "out")
    })
}

/// Quantile of a discrete distribution with the given weights (summing to 1).
///
/// # Safety
/// `values` and `weights` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn croms_weighted_quantile(
    values: *const f64,
    weights: *const f64,
    len: usize,
    level: f64,
    out: *mut f64,
) -> CromsStatus {
    guard(|| {
        let v = input(values, len, "values")?;
        let w = input(weights, len, "weights")?;
        put(out, quantile::weighted_quantile(v, w, level)?, "out")
    })
}

/// Split-conformal threshold at level `(1 - alpha)(1 + 1/len)`.
///
/// # Safety
/// `scores` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn croms_conformal_threshold(scores: *const f64, len: usize, alpha: f64, out: *mut f64) -> CromsStatus {
    guard(|| {
        let s = input(scores, len, "scores")?;
        put(out, quantile::inflated_conformal_threshold(s, alpha)?, "out")
    })
}

/// Full-conformal threshold: the `1 - alpha` quantile of the scores together
/// with `test_score`.
///
/// # Safety
/// `scores` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn croms_augmented_threshold(
    scores: *const f64,
    len: usize,
    test_score: f64,
    alpha: f64,
    out: *mut f64,
) -> CromsStatus {
    guard(|| {
        let s = input(scores, len, "scores")?;
        put(out, quantile::augmented_threshold(s, test_score, alpha)?, "out")
    })
}

fn write_solution(sol: &RobustSolution, index: *mut usize, weights: *mut f64, p: usize, worst: *mut f64) -> FfiResult<()> {
    unsafe {
        match &sol.decision {
            Decision::Index(i) => {
                if !index.is_null() {
                    index.write(*i);
                }
            }
            Decision::Weights(w) => output(weights, p, "weights")?.copy_from_slice(w),
        }
        put(worst, sol.worst_case_loss, "worst")
    }
}

/// Finite robust decision: the column `z` minimizing `max_{y in set} L[y][z]`
/// over a row-major `rows x cols` loss matrix. Ties go to the lowest index.
///
/// # Safety
/// `matrix` must hold `rows * cols` doubles, `set` must hold `set_len`
/// indices, `decision` and `worst` must be writable.
#[no_mangle]
pub unsafe extern "C" fn croms_solve_finite(
    matrix: *const f64,
    rows: usize,
    cols: usize,
    set: *const usize,
    set_len: usize,
    decision: *mut usize,
    worst: *mut f64,
) -> CromsStatus {
    guard(|| {
        let m = rows_checked(matrix, rows, cols)?;
        let s = input(set, set_len, "set")?;
        if decision.is_null() {
            return Err(null("decision"));
        }
        write_solution(&cro::solve_finite(&m, s)?, decision, ptr::null_mut(), 0, worst)
    })
}

unsafe fn rows_checked(flat: *const f64, nrows: usize, ncols: usize) -> FfiResult<Vec<Vec<f64>>> {
    let len = nrows.checked_mul(ncols).ok_or_else(|| bad("matrix size overflows"))?;
    Ok(rows(input(flat, len, "matrix")?, nrows, ncols))
}

/// Portfolio weights minimizing the worst-case loss `-y'z` over the box
/// `|y_j - mu_j| <= q`.
///
/// # Safety
/// `mu` must hold `p` doubles, `weights` must be writable for `p` doubles and
/// `worst` for one.
#[no_mangle]
pub unsafe extern "C" fn croms_solve_box_portfolio(
    mu: *const f64,
    p: usize,
    q: f64,
    weights: *mut f64,
    worst: *mut f64,
) -> CromsStatus {
    guard(|| {
        let m = input(mu, p, "mu")?;
        write_solution(&cro::solve_box_portfolio(m, q)?, ptr::null_mut(), weights, p, worst)
    })
}

/// Portfolio weights minimizing the worst-case loss `-y'z` over the ellipsoid
/// `(y - mu)' sigma^-1 (y - mu) <= q`, by projected gradient descent with
/// default settings. `sigma` is row-major `p x p`.
///
/// # Safety
/// `mu` must hold `p` doubles and `sigma` `p * p`; `weights` must be
/// writable for `p` doubles and `worst` for one.
#[no_mangle]
pub unsafe extern "C" fn croms_solve_ellipsoid_portfolio(
    mu: *const f64,
    sigma: *const f64,
    p: usize,
    q: f64,
    weights: *mut f64,
    worst: *mut f64,
) -> CromsStatus {
    guard(|| {
        let m = input(mu, p, "mu")?;
        let s = rows_checked(sigma, p, p)?;
        let sol = cro::solve_ellipsoid_portfolio(m, &s, q, &PgdConfig::default())?;
        write_solution(&sol, ptr::null_mut(), weights, p, worst)
    })
}

/// A parsed experiment configuration.
pub struct CromsExperiment {
    config: ExperimentConfig,
}

fn boxed(out: *mut *mut CromsExperiment, config: ExperimentConfig) -> FfiResult<()> {
    let handle = Box::into_raw(Box::new(CromsExperiment { config }));
    unsafe { put(out, handle, "out") }.inspect_err(|_| drop(unsafe { Box::from_raw(handle) }))
}

/// Parses and validates a TOML experiment config.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn croms_experiment_from_toml(toml: *const c_char, out: *mut *mut CromsExperiment) -> CromsStatus {
    guard(|| boxed(out, ExperimentConfig::from_toml_str(text(toml, "toml")?)?))
}

/// Loads a built-in preset by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn croms_experiment_from_preset(name: *const c_char, out: *mut *mut CromsExperiment) -> CromsStatus {
    guard(|| boxed(out, harness::preset(text(name, "name")?)?))
}

/// Serializes the configuration as TOML into a new string that the caller
/// releases with `croms_string_free`.
///
/// # Safety
/// `exp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn croms_experiment_to_toml(exp: *const CromsExperiment, out: *mut *mut c_char) -> CromsStatus {
    guard(|| {
        let e = exp.as_ref().ok_or_else(|| null("experiment"))?;
        let s = CString::new(e.config.to_toml_string()?).map_err(|_| bad("config contains NUL"))?;
        put(out, s.into_raw(), "out")
    })
}

/// Overrides the master seed and replication count; 0 keeps the current
/// replication count.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn croms_experiment_set_seed(exp: *mut CromsExperiment, master_seed: u64, replications: usize) -> CromsStatus {
    guard(|| {
        let e = exp.as_mut().ok_or_else(|| null("experiment"))?;
        e.config.master_seed = master_seed;
        if replications > 0 {
            e.config.replications = replications;
        }
        e.config.validate()?;
        Ok(())
    })
}

/// Runs the experiment and writes its CSV, SVG and metadata files into
/// `out_dir`. `jobs` = 0 uses every core. The number of data rows is written
/// to `rows` when it is not null.
///
/// # Safety
/// `exp` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn croms_experiment_run(
    exp: *const CromsExperiment,
    out_dir: *const c_char,
    jobs: usize,
    rows: *mut usize,
) -> CromsStatus {
    guard(|| {
        let e = exp.as_ref().ok_or_else(|| null("experiment"))?;
        let dir = text(out_dir, "out_dir")?;
        let report = harness::run(&e.config, Path::new(dir), (jobs > 0).then_some(jobs))?;
        if !rows.is_null() {
            rows.write(report.rows);
        }
        Ok(())
    })
}

/// Releases an experiment handle. Null is ignored.
///
/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn croms_experiment_free(exp: *mut CromsExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

#[derive(Debug)]
struct RowTable(Vec<Vec<f64>>);

impl ClassProbabilities for RowTable {
    fn num_classes(&self) -> usize {
        self.0[0].len()
    }
    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.0[x[0] as usize].clone()
    }
}

/// Model selection over classifiers given only through their predicted
/// class probabilities on a labeled set. Scores are `1 - p_y(x)`.
pub struct CromsTabular {
    /// `[model][row][class]` for the labeled rows.
    probs: Vec<Vec<Vec<f64>>>,
    labeled: LabeledDataset,
    loss: LossSpec,
    alpha: f64,
    classes: usize,
}

impl CromsTabular {
    fn models(&self, test: &[f64]) -> Vec<ScoreModel> {
        self.probs
            .iter()
            .enumerate()
            .map(|(id, table)| {
                let mut t = table.clone();
                t.push(test[id * self.classes..(id + 1) * self.classes].to_vec());
                ScoreModel::softmax(id, Arc::new(RowTable(t)))
            })
            .collect()
    }
}

/// Builds a tabular predictor.
///
/// `probs` is `num_models x n x classes`, row-major; `labels` holds `n` class
/// indices; `loss` is the row-major `classes x classes` matrix `L[y][z]`.
///
/// # Safety
/// All pointers must be valid for the stated lengths and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn croms_tabular_new(
    probs: *const f64,
    num_models: usize,
    n: usize,
    classes: usize,
    labels: *const usize,
    loss: *const f64,
    alpha: f64,
    out: *mut *mut CromsTabular,
) -> CromsStatus {
    guard(|| {
        if num_models == 0 || n == 0 || classes == 0 {
            return Err(bad("num_models, n and classes must be positive"));
        }
        let per_model = n.checked_mul(classes).ok_or_else(|| bad("size overflows"))?;
        let total = per_model.checked_mul(num_models).ok_or_else(|| bad("size overflows"))?;
        let flat = input(probs, total, "probs")?;
        let tables = (0..num_models)
            .map(|m| rows(&flat[m * per_model..(m + 1) * per_model], n, classes))
            .collect();
        let ys = input(labels, n, "labels")?.to_vec();
        let xs = (0..n).map(|i| vec![i as f64]).collect();
        let labeled = LabeledDataset::classification(xs, ys, classes)?;
        let loss = LossSpec::matrix(rows_checked(loss, classes, classes)?)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(bad(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let handle = CromsTabular {
            probs: tables,
            labeled,
            loss,
            alpha,
            classes,
        };
        let raw = Box::into_raw(Box::new(handle));
        put(out, raw, "out").inspect_err(|_| drop(Box::from_raw(raw)))
    })
}

/// Selects a model for one test point and returns its robust decision.
///
/// `test_probs` is `num_models x classes`. `in_set` receives 0/1 membership
/// of each class in the prediction set; `model`, `decision` and `worst`
/// receive the selected model index, the chosen action and its worst-case
/// loss over the set.
///
/// # Safety
/// `tab` must be a live handle; pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn croms_tabular_predict(
    tab: *const CromsTabular,
    test_probs: *const f64,
    method: CromsMethod,
    in_set: *mut u8,
    model: *mut usize,
    decision: *mut usize,
    worst: *mut f64,
) -> CromsStatus {
    guard(|| {
        let t = tab.as_ref().ok_or_else(|| null("tabular"))?;
        let k = t.classes;
        let test = input(test_probs, t.probs.len() * k, "test_probs")?;
        let models = t.models(test);
        let p = Problem::new(&models, &t.labeled, &t.loss, t.alpha)?;
        let x = [t.labeled.len() as f64];
        let res = match method {
            CromsMethod::FullConformal => FCroms::classification(&p)?.predict(&p, &x)?,
            CromsMethod::Efficient => ECroms::fit(&p)?.predict(&p, &x)?,
        };
        let members = output(in_set, k, "in_set")?;
        members.fill(0);
        if let PredictionSet::FiniteLabels(ls) = &res.set {
            for &l in ls {
                members[l] = 1;
            }
        }
        put(model, res.lambda_hat, "model")?;
        let d = res.solution.decision.index().ok_or_else(|| bad("non-finite decision"))?;
        put(decision, d, "decision")?;
        put(worst, res.solution.worst_case_loss, "worst")
    })
}

/// Releases a tabular predictor. Null is ignored.
///
/// # Safety
/// `tab` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn croms_tabular_free(tab: *mut CromsTabular) {
    if !tab.is_null() {
        drop(Box::from_raw(tab));
    }
}
