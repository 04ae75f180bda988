//! C ABI over `sapt-core`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load`/`sapt_run` call and released by the matching `*_free`.
//! Fallible calls return a [`SaptStatus`]; on failure the message is kept in
//! a thread-local slot readable through [`sapt_last_error_message`].
//! Panics are caught at the boundary and reported as [`SaptStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use sapt_core::data::{self, CsvSchema, Dataset};
use sapt_core::diagnostics;
use sapt_core::model::{NetworkTopology, PriorConfig};
use sapt_core::orchestrator::{self, PosteriorChain, RunReport, SamplerConfig};
use sapt_core::registry::Registry;
use sapt_core::tempering::ProposalKind;
use sapt_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Runtime = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaptProposal {
    RandomWalk = 0,
    /// Langevin-gradient steps mixed with random-walk steps.
    Langevin = 1,
}

/// Sampler settings. Starts from the library defaults.
pub struct SaptConfig {
    inner: SamplerConfig,
}

/// A train/test pair, normalized with training statistics.
pub struct SaptData {
    train: Dataset,
    test: Dataset,
    /// Hidden units suggested by the dataset registry.
    default_hidden: Option<usize>,
}

/// Posterior samples and run statistics of a finished run.
pub struct SaptRun {
    chain: PosteriorChain,
    report: RunReport,
    topology: NetworkTopology,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SaptCounts {
    pub true_evals: u64,
    pub surrogate_evals: u64,
    pub swap_attempts: u64,
    pub swap_accepts: u64,
    pub elapsed_seconds: f64,
}

/// Classification accuracy in percent over thinned posterior samples.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SaptAccuracy {
    pub train_mean: f64,
    pub train_std: f64,
    pub train_best: f64,
    pub test_mean: f64,
    pub test_std: f64,
    pub test_best: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

type Failure = (SaptStatus, String);

fn from_core(e: Error) -> Failure {
    let status = match &e {
        Error::Io { .. } => SaptStatus::Io,
        _ if e.is_config() => SaptStatus::Config,
        Error::Contract(_) => SaptStatus::InvalidArgument,
        _ => SaptStatus::Runtime,
    };
    (status, e.to_string())
}

fn invalid(message: &str) -> Failure {
    (SaptStatus::InvalidArgument, message.to_string())
}

fn null(name: &str) -> Failure {
    (SaptStatus::NullPointer, format!("{name} is NULL"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SaptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SaptStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            SaptStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(name))
}

unsafe fn deref_mut<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(name))
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(&format!("{name} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = out.as_mut().ok_or_else(|| null("out"))?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sapt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bytes needed to hold the last error message of this thread, including the NUL.
#[no_mangle]
pub extern "C" fn sapt_last_error_length() -> usize {
    LAST_ERROR.with(|slot| slot.borrow().len() + 1)
}

/// Copies the last error message of this thread into `buf`, truncating to
/// `len - 1` bytes and always NUL-terminating. Returns the full message
/// length including the NUL, so callers can detect truncation.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sapt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        if !buf.is_null() && len > 0 {
            let n = message.len().min(len - 1);
            std::ptr::copy_nonoverlapping(message.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        message.len() + 1
    })
}

/// New configuration holding the library defaults. Free with [`sapt_config_free`].
#[no_mangle]
pub extern "C" fn sapt_config_new() -> *mut SaptConfig {
    Box::into_raw(Box::new(SaptConfig {
        inner: SamplerConfig::default(),
    }))
}

/// # Safety
/// `config` must be NULL or a pointer from [`sapt_config_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sapt_config_free(config: *mut SaptConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn with_config(config: *mut SaptConfig, f: impl FnOnce(&mut SamplerConfig)) -> SaptStatus {
    guard(|| {
        let c = deref_mut(config, "config")?;
        f(&mut c.inner);
        Ok(())
    })
}

/// Sets the replica count and the total sample budget shared by all replicas.
///
/// # Safety
/// `config` must be a live pointer from [`sapt_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sapt_config_set_size(config: *mut SaptConfig, replicas: usize, total_samples: usize) -> SaptStatus {
    with_config(config, |c| {
        c.replica_count = replicas;
        c.total_samples = total_samples;
    })
}

/// Steps between swap sweeps and between surrogate training rounds.
///
/// # Safety
/// `config` must be a live pointer from [`sapt_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sapt_config_set_intervals(config: *mut SaptConfig, swap: usize, surrogate: usize) -> SaptStatus {
    with_config(config, |c| {
        c.swap_interval = swap;
        c.surrogate_interval = surrogate;
    })
}

/// # Safety
/// `config` must be a live pointer from [`sapt_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sapt_config_set_tempering(config: *mut SaptConfig, max_temp: f64, burn_in_fraction: f64) -> SaptStatus {
    with_config(config, |c| {
        c.max_temp = max_temp;
        c.burn_in_fraction = burn_in_fraction;
    })
}

/// Per-step probability of estimating the likelihood with the surrogate; 0 disables it.
///
/// # Safety
/// `config` must be a live pointer from [`sapt_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sapt_config_set_surrogate_prob(config: *mut SaptConfig, prob: f64) -> SaptStatus {
    with_config(config, |c| c.surrogate_prob = prob)
}

/// # Safety
/// `config` must be a live pointer from [`sapt_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sapt_config_set_proposal(
    config: *mut SaptConfig,
    kind: SaptProposal,
    rw_step_sd: f64,
    lg_rate: f64,
    lg_prob: f64,
) -> SaptStatus {
    with_config(config, |c| {
        c.proposal.kind = match kind {
            SaptProposal::RandomWalk => ProposalKind::RandomWalk,
            SaptProposal::Langevin => ProposalKind::LangevinMix,
        };
        c.proposal.rw_step_sd = rw_step_sd;
        c.proposal.lg_learning_rate = lg_rate;
        c.proposal.lg_prob = lg_prob;
    })
}

/// Sets the base seed and whether replicas run on the calling thread.
///
/// # Safety
/// `config` must be a live pointer from [`sapt_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sapt_config_set_seed(config: *mut SaptConfig, seed: u64, sequential: bool) -> SaptStatus {
    with_config(config, |c| {
        c.base_seed = seed;
        c.sequential = sequential;
    })
}

/// Checks the configuration without running anything.
///
/// # Safety
/// `config` must be a live pointer from [`sapt_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sapt_config_validate(config: *const SaptConfig) -> SaptStatus {
    guard(|| deref(config, "config")?.inner.validate().map_err(from_core))
}

fn split_into(full: Dataset, train_fraction: f64, seed: u64, default_hidden: Option<usize>) -> Result<SaptData, Failure> {
    let (train, test) = data::split(&full, train_fraction, seed).map_err(from_core)?;
    Ok(SaptData {
        train,
        test,
        default_hidden,
    })
}

/// Loads a registered dataset (iris, cancer, ...) and splits it.
/// `data_dir` may be NULL; it is only consulted for datasets that are not bundled.
///
/// # Safety
/// `name` must be a NUL-terminated string, `data_dir` NULL or NUL-terminated,
/// and `out` a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn sapt_data_load(
    name: *const c_char,
    data_dir: *const c_char,
    train_fraction: f64,
    seed: u64,
    out: *mut *mut SaptData,
) -> SaptStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let dir = if data_dir.is_null() {
            None
        } else {
            Some(Path::new(str_arg(data_dir, "data_dir")?))
        };
        let registry = Registry::builtin();
        let entry = registry
            .get(name)
            .ok_or_else(|| (SaptStatus::Config, format!("unknown dataset '{name}'")))?;
        let full = entry.load(dir).map_err(from_core)?;
        write_out(out, split_into(full, train_fraction, seed, Some(entry.hidden_units))?)
    })
}

/// Loads a CSV file (features then an integer label per row) and splits it.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sapt_data_load_csv(
    path: *const c_char,
    has_header: bool,
    train_fraction: f64,
    seed: u64,
    out: *mut *mut SaptData,
) -> SaptStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let schema = CsvSchema {
            feature_count: None,
            class_count: None,
            has_header,
        };
        let full = data::load_csv(path, &schema).map_err(from_core)?;
        write_out(out, split_into(full, train_fraction, seed, None)?)
    })
}

/// # Safety
/// `data` must be NULL or a handle from a `sapt_data_load*` call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sapt_data_free(data: *mut SaptData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Row counts of the train and test splits plus input and class counts.
///
/// # Safety
/// `data` must be a live data handle; output pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sapt_data_shape(
    data: *const SaptData,
    train_rows: *mut usize,
    test_rows: *mut usize,
    inputs: *mut usize,
    classes: *mut usize,
) -> SaptStatus {
    guard(|| {
        let d = deref(data, "data")?;
        for (ptr, value) in [
            (train_rows, d.train.len()),
            (test_rows, d.test.len()),
            (inputs, d.train.input_count()),
            (classes, d.train.class_count()),
        ] {
            if let Some(slot) = ptr.as_mut() {
                *slot = value;
            }
        }
        Ok(())
    })
}

/// Samples the network posterior on the training split.
/// `hidden_units` of 0 takes the registry value (an error for CSV data).
///
/// # Safety
/// `config` and `data` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sapt_run(
    config: *const SaptConfig,
    data: *const SaptData,
    hidden_units: usize,
    prior_var: f64,
    out: *mut *mut SaptRun,
) -> SaptStatus {
    guard(|| {
        let config = &deref(config, "config")?.inner;
        let d = deref(data, "data")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let hidden = match (hidden_units, d.default_hidden) {
            (0, Some(h)) => h,
            (0, None) => return Err((SaptStatus::Config, "hidden_units is required for CSV data".into())),
            (h, _) => h,
        };
        let topology = NetworkTopology::new(d.train.input_count(), hidden, d.train.class_count()).map_err(from_core)?;
        let prior = PriorConfig::new(prior_var).map_err(from_core)?;
        let (chain, report) = orchestrator::run(config, &d.train, &topology, prior).map_err(from_core)?;
        write_out(out, SaptRun { chain, report, topology })
    })
}

/// # Safety
/// `run` must be NULL or a handle from [`sapt_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sapt_run_free(run: *mut SaptRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of retained posterior samples, or 0 for a NULL handle.
///
/// # Safety
/// `run` must be NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn sapt_run_sample_count(run: *const SaptRun) -> usize {
    run.as_ref().map_or(0, |r| r.chain.sample_count())
}

/// Parameters per sample, or 0 for a NULL handle.
///
/// # Safety
/// `run` must be NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn sapt_run_dim(run: *const SaptRun) -> usize {
    run.as_ref().map_or(0, |r| r.chain.dim())
}

/// Copies the posterior samples row-major (sample count x dim) into `buf`.
/// `len` is the capacity of `buf` in doubles and must cover every sample.
///
/// # Safety
/// `run` must be a live run handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sapt_run_copy_samples(run: *const SaptRun, buf: *mut f64, len: usize) -> SaptStatus {
    guard(|| {
        let r = deref(run, "run")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let needed = r.chain.sample_count() * r.chain.dim();
        if len < needed {
            return Err(invalid(&format!("buffer holds {len} values, {needed} needed")));
        }
        let out = std::slice::from_raw_parts_mut(buf, needed);
        for (dst, src) in out.chunks_exact_mut(r.chain.dim()).zip(r.chain.samples()) {
            dst.copy_from_slice(src);
        }
        Ok(())
    })
}

/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sapt_run_counts(run: *const SaptRun, out: *mut SaptCounts) -> SaptStatus {
    guard(|| {
        let r = &deref(run, "run")?.report;
        let slot = deref_mut(out, "out")?;
        *slot = SaptCounts {
            true_evals: r.true_evals,
            surrogate_evals: r.surrogate_evals,
            swap_attempts: r.swap_attempts,
            swap_accepts: r.swap_accepts,
            elapsed_seconds: r.elapsed_seconds,
        };
        Ok(())
    })
}

/// Accuracy of every `thin`-th posterior sample on the data handle's splits.
///
/// # Safety
/// `run` and `data` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sapt_run_accuracy(
    run: *const SaptRun,
    data: *const SaptData,
    thin: usize,
    out: *mut SaptAccuracy,
) -> SaptStatus {
    guard(|| {
        let r = deref(run, "run")?;
        let d = deref(data, "data")?;
        let slot = deref_mut(out, "out")?;
        let s = diagnostics::posterior_accuracy(&r.chain, &d.train, &d.test, &r.topology, thin, r.report.elapsed_seconds)
            .map_err(from_core)?;
        *slot = SaptAccuracy {
            train_mean: s.train_mean,
            train_std: s.train_std,
            train_best: s.train_best,
            test_mean: s.test_mean,
            test_std: s.test_std,
            test_best: s.test_best,
        };
        Ok(())
    })
}

/// Writes the run report as `key = value` text into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full length including the NUL,
/// or 0 for a NULL handle.
///
/// # Safety
/// `run` must be NULL or a live run handle; `buf` NULL or `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sapt_run_report(run: *const SaptRun, buf: *mut c_char, len: usize) -> usize {
    let Some(r) = run.as_ref() else {
        return 0;
    };
    let text = r.report.to_text();
    if !buf.is_null() && len > 0 {
        let n = text.len().min(len - 1);
        std::ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
    }
    text.len() + 1
}
