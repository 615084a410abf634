//! C ABI over `prd-core`.
//!
//! Every fallible call returns a [`PrdStatus`]. On failure the message is
//! kept per thread and can be copied out with [`prd_last_error_message`].
//! Tasks and run records are opaque handles released with their `_free`
//! function. Arrays are passed as pointer plus length and never retained.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use prd_core::estimator::{self, EstimatorConfig, EstimatorKind, Normalization};
use prd_core::kernel::{self, SamplingMode, SmoothingKernel};
use prd_core::optimizer::{run_optimization_from, RunRecord};
use prd_core::schedule::{BandwidthSchedule, ScheduleKind};
use prd_core::tasks::{self, Task};
use prd_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownTask = 3,
    Unsupported = 4,
    TaskFailure = 5,
    NonFinite = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrdSamplingMode {
    Importance = 0,
    Gaussian = 1,
    Uniform = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrdNormalization {
    Unbiased = 0,
    Alg1Raw = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrdEstimatorKind {
    Score = 0,
    Reparam = 1,
    Fd = 2,
    Spsa = 3,
    Hard = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrdScheduleKind {
    Linear = 0,
    Constant = 1,
}

/// Enum-valued fields hold the `PrdSamplingMode`, `PrdNormalization` and
/// `PrdEstimatorKind` values as plain integers.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrdEstimatorConfig {
    pub sample_count: usize,
    pub sampling_mode: u32,
    pub antithetic: bool,
    pub normalization: u32,
    pub estimator_kind: u32,
    /// FD/SPSA probe distance as a fraction of the domain extent.
    pub step: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrdRunEntry {
    pub iteration: usize,
    pub image_mse: f64,
    pub param_mse: f64,
    pub n_evals: usize,
    pub clamped: bool,
}

/// A registered task.
pub struct PrdTask(Box<dyn Task>);

/// The log of one optimization run.
pub struct PrdRun(RunRecord);

struct Failure {
    status: PrdStatus,
    message: String,
}

impl Failure {
    fn new(status: PrdStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownTask(_) => PrdStatus::UnknownTask,
            Error::UnsupportedEstimator { .. } => PrdStatus::Unsupported,
            Error::Task { .. } => PrdStatus::TaskFailure,
            Error::NonFiniteGradient { .. } => PrdStatus::NonFinite,
            Error::Io { .. } => PrdStatus::Io,
            _ => PrdStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PrdStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".to_string());
        Err(Failure::new(PrdStatus::Panic, msg))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PrdStatus::Ok
        }
        Err(f) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = Some(f.message));
            f.status
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(PrdStatus::NullPointer, format!("`{what}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn task_ref<'a>(task: *const PrdTask) -> Result<&'a dyn Task, Failure> {
    non_null(task, "task")?;
    Ok((*task).0.as_ref())
}

fn check_dim(task: &dyn Task, dim: usize) -> Result<(), Failure> {
    let expected = task.info().dim();
    if dim == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found: dim }.into())
    }
}

fn invalid(field: &str, value: u32) -> Failure {
    Failure::new(PrdStatus::InvalidArgument, format!("invalid {field} value {value}"))
}

impl PrdEstimatorConfig {
    fn to_core(self) -> Result<EstimatorConfig, Failure> {
        let sampling_mode = match self.sampling_mode {
            0 => SamplingMode::Importance,
            1 => SamplingMode::Gaussian,
            2 => SamplingMode::Uniform,
            v => return Err(invalid("sampling_mode", v)),
        };
        let normalization = match self.normalization {
            0 => Normalization::Unbiased,
            1 => Normalization::Alg1Raw,
            v => return Err(invalid("normalization", v)),
        };
        let estimator_kind = match self.estimator_kind {
            0 => EstimatorKind::Score,
            1 => EstimatorKind::Reparam,
            2 => EstimatorKind::Fd,
            3 => EstimatorKind::Spsa,
            4 => EstimatorKind::Hard,
            v => return Err(invalid("estimator_kind", v)),
        };
        let cfg = EstimatorConfig {
            sample_count: self.sample_count,
            sampling_mode,
            antithetic: self.antithetic,
            normalization,
            estimator_kind,
            step: self.step,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Length in bytes, including the terminating NUL, of the calling thread's
/// last error message; 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn prd_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |m| m.len() + 1))
}

/// Copies the last error message into `buf` as a NUL-terminated string,
/// truncating to `len` bytes. Returns the number of bytes written excluding
/// the NUL, or -1 when there is no message or `buf` is null.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn prd_last_error_message(buf: *mut c_char, len: usize) -> c_int {
    if buf.is_null() || len == 0 {
        return -1;
    }
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => -1,
        Some(msg) => {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
            n as c_int
        }
    })
}

/// Creates a task by name (`disc2d`, `occlusion`, `shadow`, `sort`,
/// `step`, `quadratic`, `quadratic2d`, `sigmoid`, `constant`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn prd_task_new(name: *const c_char, out: *mut *mut PrdTask) -> PrdStatus {
    guard(|| {
        non_null(name, "name")?;
        non_null(out, "out")?;
        *out = std::ptr::null_mut();
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Failure::new(PrdStatus::InvalidArgument, "task name is not UTF-8"))?;
        let task = tasks::by_name(name, None)?;
        *out = Box::into_raw(Box::new(PrdTask(task)));
        Ok(())
    })
}

/// # Safety
/// `task` must come from [`prd_task_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn prd_task_free(task: *mut PrdTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Parameter count; 0 for a null handle.
///
/// # Safety
/// `task` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn prd_task_dim(task: *const PrdTask) -> usize {
    task.as_ref().map_or(0, |t| t.0.info().dim())
}

/// Writes the box domain and the reference parameters, each `dim` long.
///
/// # Safety
/// `task` must be a live handle; each output must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn prd_task_domain(
    task: *const PrdTask,
    lo: *mut f64,
    hi: *mut f64,
    theta_ref: *mut f64,
    dim: usize,
) -> PrdStatus {
    guard(|| {
        let task = task_ref(task)?;
        check_dim(task, dim)?;
        let info = task.info();
        slice_mut(lo, dim, "lo")?.copy_from_slice(&info.domain_lo);
        slice_mut(hi, dim, "hi")?.copy_from_slice(&info.domain_hi);
        slice_mut(theta_ref, dim, "theta_ref")?.copy_from_slice(&info.theta_ref);
        Ok(())
    })
}

/// # Safety
/// `task` must be a live handle; `out` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn prd_task_initial_theta(task: *const PrdTask, seed: u64, out: *mut f64, dim: usize) -> PrdStatus {
    guard(|| {
        let task = task_ref(task)?;
        check_dim(task, dim)?;
        slice_mut(out, dim, "out")?.copy_from_slice(&task.initial_theta(seed));
        Ok(())
    })
}

/// # Safety
/// `task` must be a live handle; `theta` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn prd_task_loss(task: *const PrdTask, theta: *const f64, dim: usize, out: *mut f64) -> PrdStatus {
    guard(|| {
        let task = task_ref(task)?;
        check_dim(task, dim)?;
        non_null(out, "out")?;
        let theta = slice(theta, dim, "theta")?;
        *out = task.loss(theta).map_err(|e| Error::Task { tau: None, source: e })?;
        Ok(())
    })
}

/// Product of per-dimension Gaussian densities at offset `tau`.
///
/// # Safety
/// `tau` and `sigma` must hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prd_eval_kernel(tau: *const f64, sigma: *const f64, dim: usize, out: *mut f64) -> PrdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = kernel::eval_kernel(slice(tau, dim, "tau")?, slice(sigma, dim, "sigma")?)?;
        Ok(())
    })
}

/// # Safety
/// `tau`, `sigma` and `out` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn prd_eval_kernel_grad(tau: *const f64, sigma: *const f64, dim: usize, out: *mut f64) -> PrdStatus {
    guard(|| {
        let g = kernel::eval_kernel_grad(slice(tau, dim, "tau")?, slice(sigma, dim, "sigma")?)?;
        slice_mut(out, dim, "out")?.copy_from_slice(&g);
        Ok(())
    })
}

/// Magnitude drawn from the positivized kernel-gradient density for a
/// uniform variate `xi` in (0, 1].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prd_inverse_cdf_sample(xi: f64, sigma: f64, out: *mut f64) -> PrdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = kernel::inverse_cdf_sample(xi, sigma)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prd_positivized_density(tau: f64, sigma: f64, out: *mut f64) -> PrdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = kernel::positivized_density(tau, sigma)?;
        Ok(())
    })
}

/// Two importance-sampled antithetic evaluations, unbiased normalization,
/// score estimator.
#[no_mangle]
pub extern "C" fn prd_estimator_config_default() -> PrdEstimatorConfig {
    let c = EstimatorConfig::default();
    PrdEstimatorConfig {
        sample_count: c.sample_count,
        sampling_mode: PrdSamplingMode::Importance as u32,
        antithetic: c.antithetic,
        normalization: PrdNormalization::Unbiased as u32,
        estimator_kind: PrdEstimatorKind::Score as u32,
        step: c.step,
    }
}

/// Gradient estimate of the smoothed loss at `theta` with bandwidth `sigma`
/// (parameter units). `n_evals` may be null.
///
/// # Safety
/// `task` must be a live handle, `config` readable, and `theta`, `sigma`
/// and `grad` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn prd_estimate_gradient(
    task: *const PrdTask,
    theta: *const f64,
    sigma: *const f64,
    dim: usize,
    config: *const PrdEstimatorConfig,
    seed: u64,
    grad: *mut f64,
    n_evals: *mut usize,
) -> PrdStatus {
    guard(|| {
        let task = task_ref(task)?;
        check_dim(task, dim)?;
        non_null(config, "config")?;
        let cfg = (*config).to_core()?;
        let kernel = SmoothingKernel::fixed(slice(sigma, dim, "sigma")?.to_vec())?;
        let est = estimator::estimate_gradient(task, slice(theta, dim, "theta")?, &kernel, &cfg, seed)?;
        slice_mut(grad, dim, "grad")?.copy_from_slice(&est.grad);
        if !n_evals.is_null() {
            *n_evals = est.n_evals;
        }
        Ok(())
    })
}

/// Runs Adam for `iters` iterations with the bandwidth moving from
/// `sigma0` to `sigma_min` (parameter units). A null `theta0` starts from
/// the task's initializer for `seed`. On success `*out` receives a run
/// handle; on failure it is set to null.
///
/// # Safety
/// `task` must be a live handle, `config` readable, `sigma0` and
/// `sigma_min` must hold `dim` doubles, `theta0` must be null or hold `dim`
/// doubles, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prd_run_optimization(
    task: *const PrdTask,
    theta0: *const f64,
    dim: usize,
    config: *const PrdEstimatorConfig,
    sigma0: *const f64,
    sigma_min: *const f64,
    schedule: u32,
    iters: usize,
    lr: f64,
    seed: u64,
    out: *mut *mut PrdRun,
) -> PrdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = std::ptr::null_mut();
        let task = task_ref(task)?;
        check_dim(task, dim)?;
        non_null(config, "config")?;
        let cfg = (*config).to_core()?;
        let kind = match schedule {
            0 => ScheduleKind::Linear,
            1 => ScheduleKind::Constant,
            v => return Err(invalid("schedule", v)),
        };
        let schedule = BandwidthSchedule::new(
            slice(sigma0, dim, "sigma0")?.to_vec(),
            slice(sigma_min, dim, "sigma_min")?.to_vec(),
            kind,
        )?;
        let start = if theta0.is_null() {
            task.initial_theta(seed)
        } else {
            slice(theta0, dim, "theta0")?.to_vec()
        };
        let record = run_optimization_from(task, &start, &cfg, &schedule, iters, lr, seed).map_err(|e| Failure::from(e.source))?;
        *out = Box::into_raw(Box::new(PrdRun(record)));
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`prd_run_optimization`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn prd_run_free(run: *mut PrdRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of logged iterations; 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn prd_run_len(run: *const PrdRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.entries.len())
}

/// Copies entry `index` (0-based). `theta` may be null; otherwise it must
/// hold `dim` doubles and receives the parameters after that iteration.
///
/// # Safety
/// `run` must be a live handle and `entry` writable.
#[no_mangle]
pub unsafe extern "C" fn prd_run_entry(
    run: *const PrdRun,
    index: usize,
    entry: *mut PrdRunEntry,
    theta: *mut f64,
    dim: usize,
) -> PrdStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(entry, "entry")?;
        let record = &(*run).0;
        let e = record.entries.get(index).ok_or_else(|| {
            Failure::new(
                PrdStatus::InvalidArgument,
                format!("entry {index} out of range for {} entries", record.entries.len()),
            )
        })?;
        *entry = PrdRunEntry {
            iteration: e.iteration,
            image_mse: e.image_mse,
            param_mse: e.param_mse,
            n_evals: e.n_evals,
            clamped: e.clamped,
        };
        if !theta.is_null() {
            if dim != e.theta.len() {
                return Err(Error::DimensionMismatch {
                    expected: e.theta.len(),
                    found: dim,
                }
                .into());
            }
            slice_mut(theta, dim, "theta")?.copy_from_slice(&e.theta);
        }
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle; `theta` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn prd_run_final_theta(run: *const PrdRun, theta: *mut f64, dim: usize) -> PrdStatus {
    guard(|| {
        non_null(run, "run")?;
        let last = (*run).0.final_theta();
        if dim != last.len() {
            return Err(Error::DimensionMismatch {
                expected: last.len(),
                found: dim,
            }
            .into());
        }
        slice_mut(theta, dim, "theta")?.copy_from_slice(last);
        Ok(())
    })
}
