//! Adam loop over smoothed-gradient estimates with a decaying bandwidth.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::estimator::{estimate_gradient, EstimatorConfig};
use crate::kernel::SmoothingKernel;
use crate::schedule::BandwidthSchedule;
use crate::tasks::{evaluate_loss, Task};

pub const DEFAULT_LR: f64 = 2e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Bias-corrected Adam update; returns the increment to add to theta.
    pub fn step(&mut self, grad: &[f64]) -> Result<Vec<f64>> {
        if grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                found: grad.len(),
            });
        }
        if let Some(component) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                iteration: self.step_count + 1,
                component,
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let delta = grad
            .iter()
            .enumerate()
            .map(|(j, &g)| {
                self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * g;
                self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[j] / bc1;
                let v_hat = self.v[j] / bc2;
                -self.lr * m_hat / (v_hat.sqrt() + self.eps)
            })
            .collect();
        Ok(delta)
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, grad: &[f64]) -> Result<(AdamState, Vec<f64>)> {
    let mut next = state.clone();
    let delta = next.step(grad)?;
    Ok((next, delta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    /// 1-based.
    pub iteration: usize,
    /// Parameters after this iteration's update.
    pub theta: Vec<f64>,
    pub image_mse: f64,
    pub param_mse: f64,
    /// Bandwidth used for this iteration's estimate.
    pub sigma: Vec<f64>,
    /// Cumulative black-box evaluations spent by the estimator.
    pub n_evals: usize,
    /// Seconds spent estimating and stepping in this iteration.
    pub wall_time: f64,
    /// The update left the domain and was clamped back.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub initial_theta: Vec<f64>,
    pub entries: Vec<RunEntry>,
}

impl RunRecord {
    pub fn final_theta(&self) -> &[f64] {
        self.entries.last().map_or(&self.initial_theta, |e| &e.theta)
    }

    pub fn total_evals(&self) -> usize {
        self.entries.last().map_or(0, |e| e.n_evals)
    }

    /// Equality ignoring wall-clock timings.
    pub fn same_trajectory(&self, other: &RunRecord) -> bool {
        self.initial_theta == other.initial_theta
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                RunEntry {
                    wall_time: 0.0,
                    ..a.clone()
                } == RunEntry {
                    wall_time: 0.0,
                    ..b.clone()
                }
            })
    }
}

#[derive(Debug, Error)]
#[error("optimization aborted at iteration {iteration}: {source}")]
pub struct OptimizeError {
    pub iteration: usize,
    #[source]
    pub source: Error,
    /// Entries logged before the failure.
    pub partial: RunRecord,
}

/// Computes the diagnostics for each entry. Kept apart from the update so
/// the stepper only ever sees gradient estimates.
struct Recorder<'a> {
    task: &'a dyn Task,
    record: RunRecord,
}

impl Recorder<'_> {
    fn log(&mut self, iteration: usize, theta: &[f64], sigma: &[f64], n_evals: usize, wall_time: f64, clamped: bool) -> Result<()> {
        let report = evaluate_loss(self.task, theta)?;
        self.record.entries.push(RunEntry {
            iteration,
            theta: theta.to_vec(),
            image_mse: report.image_mse,
            param_mse: report.param_mse,
            sigma: sigma.to_vec(),
            n_evals,
            wall_time,
            clamped,
        });
        Ok(())
    }
}

/// Runs from `task.initial_theta(seed)`.
pub fn run_optimization(
    task: &dyn Task,
    config: &EstimatorConfig,
    schedule: &BandwidthSchedule,
    iters: usize,
    lr: f64,
    seed: u64,
) -> std::result::Result<RunRecord, OptimizeError> {
    let theta0 = task.initial_theta(seed);
    run_optimization_from(task, &theta0, config, schedule, iters, lr, seed)
}

/// Iteration `i` (1-based) uses the bandwidth at progress
/// `(i - 1) / (iters - 1)`, so the first estimate uses `sigma0` and the
/// last uses `sigma_min`.
pub fn run_optimization_from(
    task: &dyn Task,
    theta0: &[f64],
    config: &EstimatorConfig,
    schedule: &BandwidthSchedule,
    iters: usize,
    lr: f64,
    seed: u64,
) -> std::result::Result<RunRecord, OptimizeError> {
    let fail = |iteration: usize, source: Error, partial: RunRecord| OptimizeError {
        iteration,
        source,
        partial,
    };
    let info = task.info();
    let mut recorder = Recorder {
        task,
        record: RunRecord {
            initial_theta: theta0.to_vec(),
            entries: Vec::with_capacity(iters),
        },
    };
    let setup = (|| -> Result<SmoothingKernel> {
        if iters == 0 {
            return Err(Error::config("iters", "must be >= 1"));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config("lr", "must be finite and > 0"));
        }
        if theta0.len() != info.dim() {
            return Err(Error::DimensionMismatch {
                expected: info.dim(),
                found: theta0.len(),
            });
        }
        config.validate()?;
        SmoothingKernel::new(schedule.sigma0().to_vec(), schedule.sigma_min().to_vec())
    })();
    let mut kernel = match setup {
        Ok(k) => k,
        Err(e) => return Err(fail(0, e, recorder.record)),
    };
    if kernel.dim() != info.dim() {
        let e = Error::DimensionMismatch {
            expected: info.dim(),
            found: kernel.dim(),
        };
        return Err(fail(0, e, recorder.record));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = AdamState::new(info.dim(), lr);
    let mut theta = theta0.to_vec();
    info.clamp(&mut theta);
    let mut evals = 0usize;

    for iteration in 1..=iters {
        let started = Instant::now();
        let progress = if iters > 1 {
            (iteration - 1) as f64 / (iters - 1) as f64
        } else {
            0.0
        };
        let bandwidth = schedule.bandwidth_at(progress);
        if let Err(e) = kernel.set_sigma(&bandwidth.sigma) {
            return Err(fail(iteration, e, recorder.record));
        }
        let estimate = match estimate_gradient(task, &theta, &kernel, config, rng.next_u64()) {
            Ok(est) => est,
            Err(e) => return Err(fail(iteration, e, recorder.record)),
        };
        let delta = match adam.step(&estimate.grad) {
            Ok(d) => d,
            Err(Error::NonFiniteGradient { component, .. }) => {
                let e = Error::NonFiniteGradient { iteration, component };
                return Err(fail(iteration, e, recorder.record));
            }
            Err(e) => return Err(fail(iteration, e, recorder.record)),
        };
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t += d;
        }
        let clamped = info.clamp(&mut theta);
        evals += estimate.n_evals;
        let wall_time = started.elapsed().as_secs_f64();
        if let Err(e) = recorder.log(iteration, &theta, kernel.sigma(), evals, wall_time, clamped) {
            return Err(fail(iteration, e, recorder.record));
        }
    }
    Ok(recorder.record)
}
