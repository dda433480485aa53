//! C ABI over `charuq`.
//!
//! Every function returns a [`CharuqStatus`]; on failure the message is
//! available from [`charuq_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use charuq::config::RunConfig;
use charuq::divergence::{self, Criterion, DivergenceRow, DivergenceTable, GridConfig};
use charuq::forward_model::TCProfile;
use charuq::pipeline::{self, PipelineOptions, PipelineReport, Which};
use charuq::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharuqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharuqCriterion {
    Jeffreys = 0,
    BackwardKl = 1,
    ForwardKl = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharuqScenario {
    Ground = 0,
    Flight = 1,
}

/// Forward, backward and symmetric divergences of one pair of sample sets.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharuqDivergences {
    pub forward: f64,
    pub backward: f64,
    pub jeffreys: f64,
}

pub struct CharuqConfig(RunConfig);
pub struct CharuqTable(DivergenceTable);
pub struct CharuqProfiles(Vec<TCProfile>);
pub struct CharuqReport(PipelineReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CharuqStatus {
    if e.is_numerical() {
        return CharuqStatus::Numerical;
    }
    match e {
        Error::Config(_) => CharuqStatus::Config,
        Error::Parse { .. } => CharuqStatus::Parse,
        Error::Io { .. } => CharuqStatus::Io,
        _ => CharuqStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> CharuqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CharuqStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            CharuqStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CharuqStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

fn which(s: CharuqScenario) -> Which {
    match s {
        CharuqScenario::Ground => Which::Ground,
        CharuqScenario::Flight => Which::Flight,
    }
}

fn criterion(c: CharuqCriterion) -> Criterion {
    match c {
        CharuqCriterion::Jeffreys => Criterion::Jeffreys,
        CharuqCriterion::BackwardKl => Criterion::BackwardKl,
        CharuqCriterion::ForwardKl => Criterion::ForwardKl,
    }
}

/// Message of the last failure on this thread; empty when none. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn charuq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn charuq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// KL divergence of `p` from `q`, both given as samples.
///
/// # Safety
/// `p` and `q` must point to `np` and `nq` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_kl_divergence(
    p: *const f64,
    np: usize,
    q: *const f64,
    nq: usize,
    out_value: *mut f64,
) -> CharuqStatus {
    guard(|| {
        let p = slice(p, np, "p")?;
        let q = slice(q, nq, "q")?;
        let o = out(out_value, "out_value")?;
        *o = divergence::kl_between(p, q, &GridConfig::default())?;
        Ok(())
    })
}

/// Forward, backward and Jeffreys divergences between two sample sets. A
/// `level` in (0, 1) restricts them to the hull of the two prediction
/// intervals at that level; any other value disables truncation.
///
/// # Safety
/// `p` and `q` must point to `np` and `nq` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_divergences(
    p: *const f64,
    np: usize,
    q: *const f64,
    nq: usize,
    level: f64,
    out_value: *mut CharuqDivergences,
) -> CharuqStatus {
    guard(|| {
        let p = slice(p, np, "p")?;
        let q = slice(q, nq, "q")?;
        let o = out(out_value, "out_value")?;
        let cfg = GridConfig::default();
        let d = if level > 0.0 && level < 1.0 {
            divergence::truncated_divergence(p, q, level, &cfg)?
        } else {
            divergence::divergences(p, q, &cfg)?
        };
        *o = CharuqDivergences {
            forward: d.forward,
            backward: d.backward,
            jeffreys: d.jeffreys,
        };
        Ok(())
    })
}

/// Empty divergence table; fill it with [`charuq_table_push`].
///
/// # Safety
/// `out_table` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_table_new(out_table: *mut *mut CharuqTable) -> CharuqStatus {
    guard(|| {
        let o = out(out_table, "out_table")?;
        *o = Box::into_raw(Box::new(CharuqTable(DivergenceTable { rows: Vec::new(), dw: 0.0 })));
        Ok(())
    })
}

/// Reads a table CSV with columns `w,kl_mixture_reference,kl_reference_mixture,jeffreys`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_table` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_table_read(path: *const c_char, out_table: *mut *mut CharuqTable) -> CharuqStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let o = out(out_table, "out_table")?;
        *o = Box::into_raw(Box::new(CharuqTable(DivergenceTable::read_csv(&path)?)));
        Ok(())
    })
}

/// Appends one row.
///
/// # Safety
/// `table` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn charuq_table_push(
    table: *mut CharuqTable,
    w: f64,
    kl_mixture_reference: f64,
    kl_reference_mixture: f64,
    jeffreys: f64,
) -> CharuqStatus {
    guard(|| {
        let t = out(table, "table")?;
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidArgument(format!("w = {w} is outside [0, 1]")).into());
        }
        t.0.rows.push(DivergenceRow::new(w, kl_mixture_reference, kl_reference_mixture, jeffreys));
        if t.0.rows.len() == 2 {
            t.0.dw = t.0.rows[1].w - t.0.rows[0].w;
        }
        Ok(())
    })
}

/// # Safety
/// `table` must come from this library; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_table_len(table: *const CharuqTable, out_len: *mut usize) -> CharuqStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(table, "table")?.0.rows.len();
        Ok(())
    })
}

/// Weight minimizing the chosen criterion; ties go to the larger weight.
///
/// # Safety
/// `table` must come from this library; `out_w` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_select_w(
    table: *const CharuqTable,
    crit: CharuqCriterion,
    out_w: *mut f64,
) -> CharuqStatus {
    guard(|| {
        let t = handle(table, "table")?;
        *out(out_w, "out_w")? = divergence::select_optimal_w(&t.0, criterion(crit))?;
        Ok(())
    })
}

/// # Safety
/// `table` must come from this library and is invalid afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn charuq_table_free(table: *mut CharuqTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Built-in default configuration.
///
/// # Safety
/// `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_config_default(out_config: *mut *mut CharuqConfig) -> CharuqStatus {
    guard(|| {
        *out(out_config, "out_config")? = Box::into_raw(Box::new(CharuqConfig(RunConfig::default())));
        Ok(())
    })
}

/// Loads and validates a JSON configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_config_load(path: *const c_char, out_config: *mut *mut CharuqConfig) -> CharuqStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let o = out(out_config, "out_config")?;
        *o = Box::into_raw(Box::new(CharuqConfig(RunConfig::load(&path)?)));
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn charuq_config_set_seed(config: *mut CharuqConfig, seed: u64) -> CharuqStatus {
    guard(|| {
        out(config, "config")?.0.seed = seed;
        Ok(())
    })
}

/// Writes the 64-character hex hash plus NUL into `buf` (at least 65 bytes).
///
/// # Safety
/// `config` must come from this library; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn charuq_config_hash(config: *const CharuqConfig, buf: *mut c_char, len: usize) -> CharuqStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        let hash = cfg.0.hash();
        if len < hash.len() + 1 {
            return Err(Error::InvalidArgument(format!("buffer of {len} bytes is too small, need {}", hash.len() + 1)).into());
        }
        ptr::copy_nonoverlapping(hash.as_ptr().cast::<c_char>(), buf, hash.len());
        *buf.add(hash.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and is invalid afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn charuq_config_free(config: *mut CharuqConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Noise-free solver thermocouple histories of a scenario at its configured
/// truth values.
///
/// # Safety
/// `config` must come from this library; `out_profiles` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_simulate(
    config: *const CharuqConfig,
    scenario: CharuqScenario,
    out_profiles: *mut *mut CharuqProfiles,
) -> CharuqStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let o = out(out_profiles, "out_profiles")?;
        *o = Box::into_raw(Box::new(CharuqProfiles(pipeline::simulate(&cfg.0, which(scenario))?)));
        Ok(())
    })
}

/// Number of thermocouples and samples per thermocouple.
///
/// # Safety
/// `profiles` must come from this library; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_profiles_shape(
    profiles: *const CharuqProfiles,
    out_n_tc: *mut usize,
    out_n_times: *mut usize,
) -> CharuqStatus {
    guard(|| {
        let p = &handle(profiles, "profiles")?.0;
        *out(out_n_tc, "out_n_tc")? = p.len();
        *out(out_n_times, "out_n_times")? = p.first().map_or(0, |x| x.times.len());
        Ok(())
    })
}

/// Copies the times and temperatures of thermocouple `tc`; both buffers
/// must hold `len` doubles, which must equal the profile length.
///
/// # Safety
/// `profiles` must come from this library; buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn charuq_profiles_copy(
    profiles: *const CharuqProfiles,
    tc: usize,
    times: *mut f64,
    values: *mut f64,
    len: usize,
) -> CharuqStatus {
    guard(|| {
        let p = &handle(profiles, "profiles")?.0;
        let prof = p
            .get(tc)
            .ok_or_else(|| Error::InvalidArgument(format!("thermocouple {tc} out of range (have {})", p.len())))?;
        if len != prof.times.len() {
            return Err(Error::InvalidArgument(format!("buffer length {len} != profile length {}", prof.times.len())).into());
        }
        if times.is_null() {
            return Err(Fail::Null("times"));
        }
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        ptr::copy_nonoverlapping(prof.times.as_ptr(), times, len);
        ptr::copy_nonoverlapping(prof.values.as_ptr(), values, len);
        Ok(())
    })
}

/// # Safety
/// `profiles` must come from this library and is invalid afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn charuq_profiles_free(profiles: *mut CharuqProfiles) {
    if !profiles.is_null() {
        drop(Box::from_raw(profiles));
    }
}

/// Runs the full pipeline, writing its outputs under `out_dir`.
///
/// # Safety
/// `config` must come from this library; `out_dir` must be a NUL-terminated
/// string; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_run_pipeline(
    config: *const CharuqConfig,
    out_dir: *const c_char,
    run_morris: bool,
    out_report: *mut *mut CharuqReport,
) -> CharuqStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let dir = path_arg(out_dir, "out_dir")?;
        let o = out(out_report, "out_report")?;
        let report = pipeline::run_pipeline(&cfg.0, &dir, &PipelineOptions { run_morris })?;
        *o = Box::into_raw(Box::new(CharuqReport(report)));
        Ok(())
    })
}

/// Headline numbers of a pipeline run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharuqSummary {
    pub optimal_w_jeffreys: f64,
    pub optimal_w_backward_kl: f64,
    pub coverage_gap_95: f64,
    pub containment_99: f64,
    pub overlay_verdict: bool,
}

/// # Safety
/// `report` must come from this library; `out_summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn charuq_report_summary(report: *const CharuqReport, out_summary: *mut CharuqSummary) -> CharuqStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        *out(out_summary, "out_summary")? = CharuqSummary {
            optimal_w_jeffreys: r.optimal_w.jeffreys,
            optimal_w_backward_kl: r.optimal_w.backward_kl,
            coverage_gap_95: r.coverage_gap_95,
            containment_99: r.containment_99,
            overlay_verdict: r.overlay_verdict,
        };
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and is invalid afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn charuq_report_free(report: *mut CharuqReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
