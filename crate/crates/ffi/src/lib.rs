//! C ABI for the grfg engine.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load`/`grfg_run` call and released by the matching `*_free`.
//! Fallible calls return a [`GrfgStatus`]; on failure the message is kept in
//! a thread-local slot readable through [`grfg_last_error_message`]. Panics
//! never unwind into C: they are caught and reported as `GRFG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use grfg::info::{mutual_information, MiConfig};
use grfg::pipeline::{run, write_outputs, RunConfig, RunOutput};
use grfg::{evaluate_expression, load_csv, Dataset, Error, Expr};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrfgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    Config = 6,
    Aborted = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// Loaded dataset: original descriptors plus target.
pub struct GrfgDataset(Dataset);

/// Run configuration, starting from defaults.
pub struct GrfgConfig(RunConfig);

/// Finished run: report, best descriptor set and trace.
pub struct GrfgResult(RunOutput);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    // Interior NULs would truncate the message; replace them.
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(clean));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(e: &Error) -> GrfgStatus {
    match e {
        Error::Io { .. } => GrfgStatus::Io,
        Error::Csv(_) | Error::Parse { .. } | Error::Json(_) | Error::BadCell { .. } => GrfgStatus::Parse,
        Error::Config(_) | Error::UnknownOperation(_) | Error::OperationNotInSet(_) => GrfgStatus::Config,
        Error::Aborted(_) => GrfgStatus::Aborted,
        _ => GrfgStatus::InvalidInput,
    }
}

struct Failure(GrfgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GrfgStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GrfgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            GrfgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(GrfgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GrfgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn owned_string(s: &str) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(GrfgStatus::InvalidInput, "string contains an interior NUL".into()))
}

/// Message of the last failed call on this thread, or null if it succeeded.
///
/// The pointer stays valid until the next grfg call on the same thread.
#[no_mangle]
pub extern "C" fn grfg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn grfg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a CSV whose non-target columns become original descriptors.
///
/// # Safety
/// `path` and `target` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grfg_dataset_load_csv(
    path: *const c_char,
    target: *const c_char,
    out: *mut *mut GrfgDataset,
) -> GrfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = load_csv(str_arg(path, "path")?, str_arg(target, "target")?)?;
        *out = Box::into_raw(Box::new(GrfgDataset(d)));
        Ok(())
    })
}

/// Builds a dataset from column-major values: column `j` occupies
/// `values[j * n_rows .. (j + 1) * n_rows]`.
///
/// # Safety
/// `names` must hold `n_cols` strings, `values` `n_cols * n_rows` doubles and
/// `target` `n_rows` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grfg_dataset_from_columns(
    names: *const *const c_char,
    n_cols: usize,
    values: *const f64,
    n_rows: usize,
    target_name: *const c_char,
    target: *const f64,
    out: *mut *mut GrfgDataset,
) -> GrfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if n_cols > 0 && names.is_null() {
            return Err(null("names"));
        }
        let mut owned = Vec::with_capacity(n_cols);
        for j in 0..n_cols {
            owned.push(str_arg(*names.add(j), "column name")?);
        }
        let total = n_cols
            .checked_mul(n_rows)
            .ok_or_else(|| Failure(GrfgStatus::OutOfRange, "n_cols * n_rows overflows".into()))?;
        let flat = slice_arg(values, total, "values")?;
        let columns = flat.chunks(n_rows.max(1)).take(n_cols).map(<[f64]>::to_vec).collect();
        let y = slice_arg(target, n_rows, "target")?.to_vec();
        let d = Dataset::from_columns(&owned, columns, str_arg(target_name, "target_name")?, y)?;
        *out = Box::into_raw(Box::new(GrfgDataset(d)));
        Ok(())
    })
}

/// Number of samples, or 0 for null.
///
/// # Safety
/// `d` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn grfg_dataset_n_samples(d: *const GrfgDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.n_samples())
}

/// Number of descriptors, or 0 for null.
///
/// # Safety
/// `d` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn grfg_dataset_n_descriptors(d: *const GrfgDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.n_descriptors())
}

/// Releases a dataset. Null is a no-op.
///
/// # Safety
/// `d` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grfg_dataset_free(d: *mut GrfgDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Evaluates an expression such as `mul(f1,sin(f2))` against the dataset's
/// original descriptors, writing `n_samples` values into `out`.
///
/// # Safety
/// `expr` must be a NUL-terminated string and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn grfg_evaluate_expression(
    d: *const GrfgDataset,
    expr: *const c_char,
    out: *mut f64,
    len: usize,
) -> GrfgStatus {
    guard(|| {
        let d = ref_arg(d, "dataset")?;
        let e: Expr = str_arg(expr, "expr")?.parse()?;
        let values = evaluate_expression(&e, &d.0, &grfg::OperationSet::default())?;
        if len != values.len() {
            return Err(Failure(
                GrfgStatus::OutOfRange,
                format!("output buffer holds {len} values, {} needed", values.len()),
            ));
        }
        if len > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, len).copy_from_slice(&values);
        }
        Ok(())
    })
}

/// Plug-in mutual information in nats over `n_bins` equal-frequency bins.
///
/// # Safety
/// `x` and `z` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grfg_mutual_information(
    x: *const f64,
    z: *const f64,
    n: usize,
    n_bins: usize,
    out: *mut f64,
) -> GrfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = MiConfig {
            n_bins,
            ..MiConfig::default()
        };
        *out = mutual_information(slice_arg(x, n, "x")?, slice_arg(z, n, "z")?, &cfg)?;
        Ok(())
    })
}

/// Creates a configuration holding the defaults.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grfg_config_new(out: *mut *mut GrfgConfig) -> GrfgStatus {
    guard(|| {
        *out_arg(out, "out")? = Box::into_raw(Box::new(GrfgConfig(RunConfig::default())));
        Ok(())
    })
}

/// Sets one key using the same names and syntax as the config file.
///
/// # Safety
/// `key` and `value` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn grfg_config_set(
    cfg: *mut GrfgConfig,
    key: *const c_char,
    value: *const c_char,
) -> GrfgStatus {
    guard(|| {
        let cfg = out_arg(cfg, "config")?;
        cfg.0.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        Ok(())
    })
}

/// Replaces the configuration with the parsed contents of `text`.
///
/// # Safety
/// `text` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn grfg_config_parse(cfg: *mut GrfgConfig, text: *const c_char) -> GrfgStatus {
    guard(|| {
        let cfg = out_arg(cfg, "config")?;
        cfg.0 = RunConfig::parse_text(str_arg(text, "text")?)?;
        Ok(())
    })
}

/// Releases a configuration. Null is a no-op.
///
/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grfg_config_free(cfg: *mut GrfgConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured mode on the dataset.
///
/// # Safety
/// `d` and `cfg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grfg_run(
    d: *const GrfgDataset,
    cfg: *const GrfgConfig,
    out: *mut *mut GrfgResult,
) -> GrfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let result = run(&ref_arg(d, "dataset")?.0, &ref_arg(cfg, "config")?.0)?;
        *out = Box::into_raw(Box::new(GrfgResult(result)));
        Ok(())
    })
}

/// Downstream score of the best descriptor set.
///
/// # Safety
/// `r` must be a live result handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grfg_result_best_va(r: *const GrfgResult, out: *mut f64) -> GrfgStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(r, "result")?.0.report.best.v_a;
        Ok(())
    })
}

/// Number of descriptors in the best set, or 0 for null.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn grfg_result_n_best(r: *const GrfgResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.best.n_descriptors())
}

/// Canonical expression of best-set descriptor `index`.
/// Release the string with [`grfg_string_free`].
///
/// # Safety
/// `r` must be a live result handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grfg_result_best_name(
    r: *const GrfgResult,
    index: usize,
    out: *mut *mut c_char,
) -> GrfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let best = &ref_arg(r, "result")?.0.best;
        let d = best.columns().get(index).ok_or_else(|| {
            Failure(
                GrfgStatus::OutOfRange,
                format!("index {index} outside a best set of {}", best.n_descriptors()),
            )
        })?;
        *out = owned_string(d.name())?;
        Ok(())
    })
}

/// Full run report as JSON. Release the string with [`grfg_string_free`].
///
/// # Safety
/// `r` must be a live result handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grfg_result_report_json(r: *const GrfgResult, out: *mut *mut c_char) -> GrfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = owned_string(&ref_arg(r, "result")?.0.report.to_json())?;
        Ok(())
    })
}

/// Writes report.json, best_features.csv and trace.log into `dir`.
///
/// # Safety
/// `r` must be a live result handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn grfg_result_write(r: *const GrfgResult, dir: *const c_char) -> GrfgStatus {
    guard(|| {
        write_outputs(&ref_arg(r, "result")?.0, str_arg(dir, "dir")?)?;
        Ok(())
    })
}

/// Releases a result. Null is a no-op.
///
/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grfg_result_free(r: *mut GrfgResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
