//! C interface to the `mcsim` toolkit.
//!
//! Objects are exposed as opaque handles created by `*_new`/`*_parse`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`McsimStatus`]; on failure the message is kept per thread and
//! can be copied out with [`mcsim_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mcsim::config::{validate, Model, Params, SimConfig};
use mcsim::dispenser::{Delegator, RateTree};
use mcsim::run::{run_config, RunOutput};
use mcsim::verify::{run_suites, Fault, Suite};
use mcsim::SimError;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    BufferTooSmall = 6,
    NotFound = 7,
    Panic = 8,
}

/// Parsed and validated run configuration.
pub struct McsimConfig {
    inner: SimConfig,
}

/// Output files and metrics of a completed run.
pub struct McsimRun {
    inner: RunOutput,
}

/// Sum-tree dispenser over nonnegative component rates.
pub struct McsimDispenser {
    inner: RateTree,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &SimError) -> McsimStatus {
    match err {
        SimError::Config(_) => McsimStatus::Config,
        SimError::Io(_) => McsimStatus::Io,
        SimError::InvalidParameter(_)
        | SimError::NonPositiveRate(_)
        | SimError::NegativeRate(_)
        | SimError::IndexOutOfRange { .. }
        | SimError::UnknownClass(_)
        | SimError::UnknownCall(_) => McsimStatus::InvalidArgument,
        _ => McsimStatus::Simulation,
    }
}

fn fail(status: McsimStatus, msg: impl Into<String>) -> McsimStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), McsimStatus>) -> McsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McsimStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(McsimStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: mcsim::Result<T>) -> Result<T, McsimStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, McsimStatus> {
    if p.is_null() {
        return Err(fail(McsimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(McsimStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, McsimStatus> {
    p.as_ref()
        .ok_or_else(|| fail(McsimStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, McsimStatus> {
    p.as_mut()
        .ok_or_else(|| fail(McsimStatus::NullPointer, format!("{what} is null")))
}

/// Copies `s` plus a terminating NUL into `buf`. `needed` receives the
/// required capacity in bytes, including the NUL.
unsafe fn copy_out(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), McsimStatus> {
    let len = s.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = len;
    }
    if buf.is_null() || cap < len {
        return Err(fail(
            McsimStatus::BufferTooSmall,
            format!("buffer of {cap} bytes, need {len}"),
        ));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes; `needed` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn mcsim_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> McsimStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    if let Some(n) = needed.as_mut() {
        *n = msg.len() + 1;
    }
    // A short buffer must not replace the message being read.
    if buf.is_null() || cap <= msg.len() {
        return McsimStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), msg.len());
    *buf.add(msg.len()) = 0;
    McsimStatus::Ok
}

/// Parses a TOML parameter document for `model` (billiards, deposition,
/// ising, telecom or circuitnet) and validates it.
///
/// # Safety
/// `model` and `toml` must be NUL-terminated strings; `out_config` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcsim_config_parse(
    model: *const c_char,
    toml: *const c_char,
    out_config: *mut *mut McsimConfig,
) -> McsimStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        *slot = ptr::null_mut();
        let model: Model = lift(text(model, "model")?.parse())?;
        let params = lift(Params::from_toml(text(toml, "toml")?))?;
        let inner = lift(validate(model, params))?;
        *slot = Box::into_raw(Box::new(McsimConfig { inner }));
        Ok(())
    })
}

/// Writes the effective configuration as TOML.
///
/// # Safety
/// `config` must come from [`mcsim_config_parse`]; buffers as in [`mcsim_last_error`].
#[no_mangle]
pub unsafe extern "C" fn mcsim_config_echo(
    config: *const McsimConfig,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> McsimStatus {
    guard(|| copy_out(&handle(config, "config")?.inner.echo(), buf, cap, needed))
}

/// # Safety
/// `config` must be null or come from [`mcsim_config_parse`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcsim_config_free(config: *mut McsimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs a configuration in memory; nothing is written to disk.
///
/// # Safety
/// `config` must come from [`mcsim_config_parse`]; `out_run` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcsim_run(config: *const McsimConfig, out_run: *mut *mut McsimRun) -> McsimStatus {
    guard(|| {
        let slot = out(out_run, "out_run")?;
        *slot = ptr::null_mut();
        let inner = lift(run_config(&handle(config, "config")?.inner))?;
        *slot = Box::into_raw(Box::new(McsimRun { inner }));
        Ok(())
    })
}

/// Copies the contents of output file `name` (for example `events.csv`).
///
/// # Safety
/// `run` must come from [`mcsim_run`]; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mcsim_run_file(
    run: *const McsimRun,
    name: *const c_char,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> McsimStatus {
    guard(|| {
        let run = handle(run, "run")?;
        let name = text(name, "name")?;
        let contents = run
            .inner
            .get(name)
            .ok_or_else(|| fail(McsimStatus::NotFound, format!("no output file '{name}'")))?;
        copy_out(contents, buf, cap, needed)
    })
}

/// Copies the value of metric `key` as text.
///
/// # Safety
/// As for [`mcsim_run_file`].
#[no_mangle]
pub unsafe extern "C" fn mcsim_run_metric(
    run: *const McsimRun,
    key: *const c_char,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> McsimStatus {
    guard(|| {
        let run = handle(run, "run")?;
        let key = text(key, "key")?;
        let value = run
            .inner
            .metrics
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| fail(McsimStatus::NotFound, format!("no metric '{key}'")))?;
        copy_out(value, buf, cap, needed)
    })
}

/// # Safety
/// `run` must be null or come from [`mcsim_run`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcsim_run_free(run: *mut McsimRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Builds a dispenser over `len` rates.
///
/// # Safety
/// `rates` must be valid for `len` reads; `out_dispenser` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcsim_dispenser_new(
    rates: *const f64,
    len: usize,
    out_dispenser: *mut *mut McsimDispenser,
) -> McsimStatus {
    guard(|| {
        let slot = out(out_dispenser, "out_dispenser")?;
        *slot = ptr::null_mut();
        if rates.is_null() && len > 0 {
            return Err(fail(McsimStatus::NullPointer, "rates is null"));
        }
        let rates = if len == 0 { &[][..] } else { std::slice::from_raw_parts(rates, len) };
        let inner = lift(RateTree::from_rates(rates))?;
        *slot = Box::into_raw(Box::new(McsimDispenser { inner }));
        Ok(())
    })
}

/// Sets the rate of component `index`.
///
/// # Safety
/// `dispenser` must come from [`mcsim_dispenser_new`].
#[no_mangle]
pub unsafe extern "C" fn mcsim_dispenser_update(dispenser: *mut McsimDispenser, index: usize, rate: f64) -> McsimStatus {
    guard(|| {
        let d = out(dispenser, "dispenser")?;
        lift(d.inner.update(index, rate)).map(|_| ())
    })
}

/// Component selected by uniform draw `q` in [0, 1).
///
/// # Safety
/// `dispenser` must come from [`mcsim_dispenser_new`]; `out_index` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcsim_dispenser_select(
    dispenser: *const McsimDispenser,
    q: f64,
    out_index: *mut usize,
) -> McsimStatus {
    guard(|| {
        let d = handle(dispenser, "dispenser")?;
        let slot = out(out_index, "out_index")?;
        *slot = lift(d.inner.select_leaf(q))?;
        Ok(())
    })
}

/// Aggregate rate.
///
/// # Safety
/// `dispenser` must come from [`mcsim_dispenser_new`]; `out_total` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcsim_dispenser_total(dispenser: *const McsimDispenser, out_total: *mut f64) -> McsimStatus {
    guard(|| {
        let d = handle(dispenser, "dispenser")?;
        *out(out_total, "out_total")? = d.inner.total();
        Ok(())
    })
}

/// # Safety
/// `dispenser` must be null or come from [`mcsim_dispenser_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcsim_dispenser_free(dispenser: *mut McsimDispenser) {
    if !dispenser.is_null() {
        drop(Box::from_raw(dispenser));
    }
}

/// Runs verification suite `suite` (or `all`) and copies the CSV report.
/// `out_passed` receives 1 when every check passed, else 0.
///
/// # Safety
/// `suite` must be NUL-terminated; `out_passed` must be valid; buffers as in
/// [`mcsim_last_error`]. `fault` may be null.
#[no_mangle]
pub unsafe extern "C" fn mcsim_verify(
    suite: *const c_char,
    seed: u64,
    fault: *const c_char,
    out_passed: *mut i32,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> McsimStatus {
    guard(|| {
        let passed = out(out_passed, "out_passed")?;
        let suite = text(suite, "suite")?;
        let suites = if suite == "all" {
            Suite::ALL.to_vec()
        } else {
            vec![lift(suite.parse::<Suite>())?]
        };
        let fault = if fault.is_null() {
            None
        } else {
            Some(lift(text(fault, "fault")?.parse::<Fault>())?)
        };
        let report = run_suites(&suites, seed, fault);
        *passed = i32::from(report.passed());
        copy_out(&report.to_csv(), buf, cap, needed)
    })
}
