//! C ABI over the nowcasting benchmark.
//!
//! Every function returns an [`NcStatus`]; results come back through out
//! pointers. On failure, [`nc_last_error`] describes the cause for the
//! calling thread. Handles are opaque and must be released with their
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nowcast_core::bench::{cmd_run, evaluate, load_cube, Evaluation, RunConfig};
use nowcast_core::evaluation::{Metric, PredictionCube};
use nowcast_core::model_api::{MethodologyId, PredictionRecord};
use nowcast_core::vintage::VintageOffset;
use nowcast_core::{Error, Quarter};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Parse = 4,
    Io = 5,
    Config = 6,
    Schema = 7,
    Estimation = 8,
    MissingCells = 9,
    Incomplete = 10,
    Panic = 11,
}

/// Metric selector for ratio queries.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcMetric {
    Mae = 0,
    Rmse = 1,
}

/// Prediction cube with its realized values.
pub struct NcCube {
    inner: PredictionCube,
}

/// Ratio, revision and aggregate tables computed from a cube.
pub struct NcEvaluation {
    inner: Evaluation,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NcStatus {
    match e {
        Error::Io(_) | Error::Http { .. } | Error::MalformedCache { .. } => NcStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::Parse(_) => NcStatus::Parse,
        Error::Config(_) => NcStatus::Config,
        Error::Schema { .. } | Error::SchemaMismatch(_) => NcStatus::Schema,
        Error::MissingCells(_) => NcStatus::MissingCells,
        Error::Backend { .. }
        | Error::NonConvergence(_)
        | Error::Numerical(_)
        | Error::EmMonotonicity { .. }
        | Error::Divergence
        | Error::TuneFailed(_) => NcStatus::Estimation,
        _ => NcStatus::InvalidInput,
    }
}

struct Fail(NcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NcStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(NcStatus::NullArgument, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(NcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` must be null or point to a live `T` created by this library.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or valid for writing a `T`.
unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn methodology(s: &str) -> Result<MethodologyId, Fail> {
    s.parse().map_err(|e: Error| Fail(NcStatus::InvalidInput, e.to_string()))
}

fn offset(o: i32) -> Result<VintageOffset, Fail> {
    VintageOffset::new(o).map_err(|e| Fail(NcStatus::InvalidInput, e.to_string()))
}

fn metric(m: NcMetric) -> Metric {
    match m {
        NcMetric::Mae => Metric::Mae,
        NcMetric::Rmse => Metric::Rmse,
    }
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn nc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an empty cube.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn nc_cube_new(out: *mut *mut NcCube) -> NcStatus {
    guard(|| {
        let cube = Box::into_raw(Box::new(NcCube {
            inner: PredictionCube::default(),
        }));
        write_out(out, cube, "out").inspect_err(|_| drop(Box::from_raw(cube)))
    })
}

/// Loads `cube.csv` and `actuals.csv` from a run's output directory.
///
/// # Safety
/// `out_dir` must be a NUL-terminated path; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn nc_cube_load(out_dir: *const c_char, out: *mut *mut NcCube) -> NcStatus {
    guard(|| {
        let dir = text(out_dir, "out_dir")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_cube(Path::new(dir))?;
        out.write(Box::into_raw(Box::new(NcCube { inner })));
        Ok(())
    })
}

/// Releases a cube. Null is ignored.
///
/// # Safety
/// `cube` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nc_cube_free(cube: *mut NcCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// Adds one nowcast. `quarter` is written like `2016Q1`; `offset` is in
/// months, −2 to 2.
///
/// # Safety
/// `cube` must be a live handle; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nc_cube_insert(
    cube: *mut NcCube,
    methodology_id: *const c_char,
    period: *const c_char,
    quarter: *const c_char,
    offset_months: i32,
    value: f64,
) -> NcStatus {
    guard(|| {
        let c = cube.as_mut().ok_or_else(|| null("cube"))?;
        let record = PredictionRecord {
            methodology: methodology(text(methodology_id, "methodology")?)?,
            period: text(period, "period")?.to_string(),
            quarter: Quarter::parse(text(quarter, "quarter")?)?,
            offset: offset(offset_months)?,
            value,
        };
        c.inner.insert(record)?;
        Ok(())
    })
}

/// Records the realized growth rate of `quarter`.
///
/// # Safety
/// `cube` must be a live handle; `quarter` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nc_cube_set_actual(cube: *mut NcCube, quarter: *const c_char, value: f64) -> NcStatus {
    guard(|| {
        let c = cube.as_mut().ok_or_else(|| null("cube"))?;
        if !value.is_finite() {
            return Err(Fail(NcStatus::InvalidInput, "actual must be finite".into()));
        }
        c.inner.set_actual(Quarter::parse(text(quarter, "quarter")?)?, value);
        Ok(())
    })
}

/// Number of nowcasts stored.
///
/// # Safety
/// `cube` must be a live handle; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn nc_cube_len(cube: *const NcCube, out: *mut usize) -> NcStatus {
    guard(|| {
        let c = handle(cube, "cube")?;
        write_out(out, c.inner.len(), "out")
    })
}

/// Computes every table for the cube. Fails on missing cells or actuals.
///
/// # Safety
/// `cube` must be a live handle; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn nc_evaluate(cube: *const NcCube, out: *mut *mut NcEvaluation) -> NcStatus {
    guard(|| {
        let c = handle(cube, "cube")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = evaluate(&c.inner)?;
        out.write(Box::into_raw(Box::new(NcEvaluation { inner })));
        Ok(())
    })
}

/// Releases an evaluation. Null is ignored.
///
/// # Safety
/// `eval` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nc_evaluation_free(eval: *mut NcEvaluation) {
    if !eval.is_null() {
        drop(Box::from_raw(eval));
    }
}

unsafe fn period_tables<'a>(
    eval: *const NcEvaluation,
    period: *const c_char,
) -> Result<&'a nowcast_core::bench::PeriodTables, Fail> {
    let e = handle(eval, "evaluation")?;
    let p = text(period, "period")?;
    e.inner
        .periods
        .iter()
        .find(|t| t.period == p)
        .ok_or_else(|| Fail(NcStatus::MissingCells, format!("no period {p}")))
}

/// Ratio to ARMA for one methodology at one offset.
///
/// # Safety
/// `eval` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_ratio(
    eval: *const NcEvaluation,
    period: *const c_char,
    which: NcMetric,
    methodology_id: *const c_char,
    offset_months: i32,
    out: *mut f64,
) -> NcStatus {
    guard(|| {
        let t = period_tables(eval, period)?;
        let id = methodology(text(methodology_id, "methodology")?)?;
        let o = offset(offset_months)?;
        let table = if metric(which) == Metric::Mae { &t.mae_ratio } else { &t.rmse_ratio };
        let row = table
            .row(id)
            .ok_or_else(|| Fail(NcStatus::MissingCells, format!("{id} not in {}", t.period)))?;
        write_out(out, row[o.index()], "out")
    })
}

/// Mean of a methodology's five offset ratios (the Average row).
///
/// # Safety
/// `eval` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_ratio_average(
    eval: *const NcEvaluation,
    period: *const c_char,
    which: NcMetric,
    methodology_id: *const c_char,
    out: *mut f64,
) -> NcStatus {
    guard(|| {
        let t = period_tables(eval, period)?;
        let id = methodology(text(methodology_id, "methodology")?)?;
        let table = if metric(which) == Metric::Mae { &t.mae_ratio } else { &t.rmse_ratio };
        let v = table
            .average_of(id)
            .ok_or_else(|| Fail(NcStatus::MissingCells, format!("{id} not in {}", t.period)))?;
        write_out(out, v, "out")
    })
}

/// Average revision between adjacent vintages, in the cube's units.
///
/// # Safety
/// `eval` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_avg_revision(
    eval: *const NcEvaluation,
    period: *const c_char,
    methodology_id: *const c_char,
    out: *mut f64,
) -> NcStatus {
    guard(|| {
        let t = period_tables(eval, period)?;
        let id = methodology(text(methodology_id, "methodology")?)?;
        let v = *t
            .revision
            .get(&id)
            .ok_or_else(|| Fail(NcStatus::MissingCells, format!("{id} not in {}", t.period)))?;
        write_out(out, v, "out")
    })
}

/// Aggregate score in [0, 1], lower is better. Needs at least two
/// methodologies covering every period.
///
/// # Safety
/// `eval` must be a live handle; `methodology_id` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_aggregate_score(
    eval: *const NcEvaluation,
    methodology_id: *const c_char,
    out: *mut f64,
) -> NcStatus {
    guard(|| {
        let e = handle(eval, "evaluation")?;
        let id = methodology(text(methodology_id, "methodology")?)?;
        let scores = e
            .inner
            .aggregate
            .as_ref()
            .ok_or_else(|| Fail(NcStatus::MissingCells, "aggregate score unavailable".into()))?;
        let v = *scores
            .get(&id)
            .ok_or_else(|| Fail(NcStatus::MissingCells, format!("{id} not scored")))?;
        write_out(out, v, "out")
    })
}

/// Runs the benchmark described by a TOML config file. `out_dir` may be
/// null to keep the config's directory. Returns `Incomplete` when some
/// cells failed; their count is written to `failed_cells` when non-null.
///
/// # Safety
/// `config_path` must be null (all defaults) or NUL-terminated; `out_dir`
/// null or NUL-terminated; `failed_cells` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nc_run(
    config_path: *const c_char,
    out_dir: *const c_char,
    synthetic: bool,
    failed_cells: *mut usize,
) -> NcStatus {
    guard(|| {
        let mut cfg = if config_path.is_null() {
            RunConfig::default()
        } else {
            RunConfig::load(Path::new(text(config_path, "config_path")?))?
        };
        if !out_dir.is_null() {
            cfg.out_dir = text(out_dir, "out_dir")?.into();
        }
        cfg.synthetic |= synthetic;
        let summary = cmd_run(&cfg)?;
        if !failed_cells.is_null() {
            failed_cells.write(summary.failures.len());
        }
        if summary.is_complete() {
            Ok(())
        } else {
            Err(Fail(
                NcStatus::Incomplete,
                format!("{} cells failed", summary.failures.len()),
            ))
        }
    })
}
