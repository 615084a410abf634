//! Monte Carlo estimators of the kernel-smoothed objective and its gradient,
//! plus finite-difference and SPSA baselines.
//!
//! The smoothed loss is `Ls(theta) = E_{tau ~ kappa}[L(theta - tau)]` and its
//! gradient is `E_{tau ~ kappa}[(tau_j / sigma_j^2) L(theta + tau)]`. Every
//! score-form variant below writes this as `E_p[h_j(tau) L(theta + tau)]`
//! for the sampling density `p` of the chosen mode, with an odd weight `h_j`:
//!
//! | mode       | `h_j(tau)` (unbiased)                               |
//! |------------|-----------------------------------------------------|
//! | importance | `sign(tau_j) * sqrt(2/pi) / sigma_j`                |
//! | gaussian   | `tau_j / sigma_j^2`                                 |
//! | uniform    | `tau_j / sigma_j^2 * kappa(tau) * prod_i 6 sigma_i` |
//!
//! Without antithetics a sample contributes `-h_j(tau) L(theta - tau)`; an
//! antithetic pair contributes `h_j(tau) (L(theta + tau) - L(theta - tau)) / 2`.
//! The importance weight is the ratio of the kernel gradient to the
//! positivized density, which is the constant `sqrt(2/pi) / sigma`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TaskError};
use crate::kernel::{
    check_count, eval_kernel, sample_offsets_with, OffsetSample, SamplingMode, SmoothingKernel,
    UNIFORM_HALF_WIDTH,
};
use crate::tasks::Task;

/// Below this many evaluations the estimator stays on the calling thread.
const PARALLEL_MIN_EVALS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Analytic constant included; the expectation is the smoothed gradient.
    Unbiased,
    /// Sum of pair differences over `N` with no constant.
    Alg1Raw,
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "unbiased" => Ok(Normalization::Unbiased),
            "alg1_raw" => Ok(Normalization::Alg1Raw),
            other => Err(format!("unknown normalization `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Kernel-gradient weighted black-box evaluations.
    Score,
    /// Kernel-perturbed analytic gradients.
    Reparam,
    /// Central finite differences of the raw loss.
    Fd,
    /// One Rademacher antithetic pair on the raw loss.
    Spsa,
    /// The task's own gradient at `theta`, no smoothing.
    Hard,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Score => "score",
            EstimatorKind::Reparam => "reparam",
            EstimatorKind::Fd => "fd",
            EstimatorKind::Spsa => "spsa",
            EstimatorKind::Hard => "hard",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "score" => Ok(EstimatorKind::Score),
            "reparam" => Ok(EstimatorKind::Reparam),
            "fd" => Ok(EstimatorKind::Fd),
            "spsa" => Ok(EstimatorKind::Spsa),
            "hard" => Ok(EstimatorKind::Hard),
            other => Err(format!("unknown estimator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub sample_count: usize,
    pub sampling_mode: SamplingMode,
    pub antithetic: bool,
    pub normalization: Normalization,
    pub estimator_kind: EstimatorKind,
    /// FD/SPSA probe distance as a fraction of each dimension's extent.
    pub step: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            sample_count: 2,
            sampling_mode: SamplingMode::Importance,
            antithetic: true,
            normalization: Normalization::Unbiased,
            estimator_kind: EstimatorKind::Score,
            step: 1e-3,
        }
    }
}

impl EstimatorConfig {
    pub fn score(sample_count: usize) -> Self {
        Self {
            sample_count,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.estimator_kind {
            EstimatorKind::Score | EstimatorKind::Reparam => check_count(self.sample_count, self.antithetic),
            EstimatorKind::Fd | EstimatorKind::Spsa => check_step(self.step),
            EstimatorKind::Hard => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    /// Black-box evaluations consumed (loss or gradient calls).
    pub n_evals: usize,
    /// Sample variance of the per-pair (or per-sample, without
    /// antithetics) contributions whose mean is `grad`.
    pub per_component_variance: Vec<f64>,
}

impl GradientEstimate {
    fn deterministic(grad: Vec<f64>, n_evals: usize) -> Self {
        let n = grad.len();
        Self {
            grad,
            n_evals,
            per_component_variance: vec![0.0; n],
        }
    }

    /// Standard error of each component, from the contribution variance.
    pub fn standard_error(&self, units: usize) -> Vec<f64> {
        self.per_component_variance
            .iter()
            .map(|v| (v / units.max(1) as f64).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedValue {
    pub value: f64,
    pub n_evals: usize,
    /// `theta` lay outside the task's nominal domain.
    pub out_of_domain: bool,
}

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidStep(step))
    }
}

fn check_theta(task: &dyn Task, theta: &[f64], kernel: Option<&SmoothingKernel>) -> Result<()> {
    let dim = task.info().dim();
    if theta.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: theta.len(),
        });
    }
    if let Some(k) = kernel {
        if k.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: k.dim(),
            });
        }
    }
    Ok(())
}

/// Evaluates `f` at every point, concurrently when the task allows it.
/// Results come back in input order.
fn evaluate_all<T, F>(task: &dyn Task, points: &[Vec<f64>], f: F) -> std::result::Result<Vec<T>, (usize, TaskError)>
where
    T: Send,
    F: Fn(&[f64]) -> std::result::Result<T, TaskError> + Sync,
{
    let results: Vec<_> = if task.serial_only() || points.len() < PARALLEL_MIN_EVALS {
        points.iter().map(|p| f(p)).collect()
    } else {
        points.par_iter().map(|p| f(p)).collect()
    };
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| (i, e)))
        .collect()
}

fn draw(
    kernel: &SmoothingKernel,
    config: &EstimatorConfig,
    mode: SamplingMode,
    rng_seed: u64,
) -> Result<Vec<OffsetSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_offsets_with(&mut rng, kernel.sigma(), config.sample_count, mode, config.antithetic)
}

/// `theta - tau` for every sample.
fn shifted(theta: &[f64], samples: &[OffsetSample]) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|s| theta.iter().zip(&s.tau).map(|(t, o)| t - o).collect())
        .collect()
}

/// `kappa(tau) / p_uniform(tau)` for the `±3 sigma` box sampler.
fn uniform_weight(tau: &[f64], sigma: &[f64]) -> f64 {
    let volume: f64 = sigma.iter().map(|s| 2.0 * UNIFORM_HALF_WIDTH * s).product();
    eval_kernel(tau, sigma).map(|k| k * volume).unwrap_or(0.0)
}

/// Odd per-component score weight `h_j(tau)`, including normalization.
fn score_weight(tau: &[f64], sigma: &[f64], mode: SamplingMode, norm: Normalization, out: &mut [f64]) {
    let uniform = match mode {
        SamplingMode::Uniform => uniform_weight(tau, sigma),
        _ => 1.0,
    };
    for j in 0..tau.len() {
        let (t, s) = (tau[j], sigma[j]);
        let unbiased = match mode {
            SamplingMode::Importance => {
                let sign = if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                sign * (2.0 / PI).sqrt() / s
            }
            SamplingMode::Gaussian => t / (s * s),
            SamplingMode::Uniform => t / (s * s) * uniform,
        };
        out[j] = match norm {
            Normalization::Unbiased => unbiased,
            // rescaled so that importance sampling reduces to sign(tau_j)
            Normalization::Alg1Raw => unbiased * s * (2.0 * PI).sqrt() / 2.0,
        };
    }
}

/// Mean and unbiased sample variance of each column of `units`.
fn mean_and_variance(units: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = units.len() as f64;
    let mut mean = vec![0.0; dim];
    for u in units {
        for j in 0..dim {
            mean[j] += u[j];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    if units.len() > 1 {
        for u in units {
            for j in 0..dim {
                let d = u[j] - mean[j];
                var[j] += d * d;
            }
        }
        for v in &mut var {
            *v /= n - 1.0;
        }
    }
    (mean, var)
}

/// Monte Carlo estimate of the kernel-smoothed loss at `theta`.
///
/// Importance mode samples the kernel itself (Gaussian), since sampling the
/// positivized gradient density would give the value estimator an
/// unbounded weight at `tau = 0`.
pub fn smoothed_value(
    task: &dyn Task,
    theta: &[f64],
    kernel: &SmoothingKernel,
    config: &EstimatorConfig,
    rng_seed: u64,
) -> Result<SmoothedValue> {
    check_theta(task, theta, Some(kernel))?;
    check_count(config.sample_count, config.antithetic)?;
    let mode = match config.sampling_mode {
        SamplingMode::Uniform => SamplingMode::Uniform,
        _ => SamplingMode::Gaussian,
    };
    let samples = draw(kernel, config, mode, rng_seed)?;
    let points = shifted(theta, &samples);
    let losses = evaluate_all(task, &points, |p| task.loss(p))
        .map_err(|(i, e)| Error::task(Some(&samples[i].tau), e))?;
    let sigma = kernel.sigma();
    let weight = |tau: &[f64]| match mode {
        SamplingMode::Uniform => uniform_weight(tau, sigma),
        _ => 1.0,
    };
    let sum: f64 = samples.iter().zip(&losses).map(|(s, l)| weight(&s.tau) * l).sum();
    Ok(SmoothedValue {
        value: sum / samples.len() as f64,
        n_evals: samples.len(),
        out_of_domain: !task.info().contains(theta),
    })
}

/// Score-form gradient of the smoothed loss; needs only loss evaluations.
///
/// Importance mode draws every coordinate of an offset from the positivized
/// marginal. That is exact in 1D and for additively separable losses. For
/// coupled losses component `j` sees the other coordinates smoothed by the
/// Rayleigh-shaped marginal instead of the Gaussian, so its mean is the
/// gradient of a slightly different blur; `Gaussian` mode is exact in any
/// dimension.
pub fn estimate_gradient_score(
    task: &dyn Task,
    theta: &[f64],
    kernel: &SmoothingKernel,
    config: &EstimatorConfig,
    rng_seed: u64,
) -> Result<GradientEstimate> {
    check_theta(task, theta, Some(kernel))?;
    check_count(config.sample_count, config.antithetic)?;
    let dim = theta.len();
    let sigma = kernel.sigma();
    let samples = draw(kernel, config, config.sampling_mode, rng_seed)?;
    let points = shifted(theta, &samples);
    let losses = evaluate_all(task, &points, |p| task.loss(p))
        .map_err(|(i, e)| Error::task(Some(&samples[i].tau), e))?;

    let mut h = vec![0.0; dim];
    let units: Vec<Vec<f64>> = if config.antithetic {
        // samples come as (tau, -tau); losses as (L(theta - tau), L(theta + tau))
        samples
            .chunks_exact(2)
            .zip(losses.chunks_exact(2))
            .map(|(pair, l)| {
                score_weight(&pair[0].tau, sigma, config.sampling_mode, config.normalization, &mut h);
                let diff = l[1] - l[0];
                h.iter().map(|w| 0.5 * w * diff).collect()
            })
            .collect()
    } else {
        samples
            .iter()
            .zip(&losses)
            .map(|(s, l)| {
                score_weight(&s.tau, sigma, config.sampling_mode, config.normalization, &mut h);
                h.iter().map(|w| -w * l).collect()
            })
            .collect()
    };
    let (grad, per_component_variance) = mean_and_variance(&units, dim);
    Ok(GradientEstimate {
        grad,
        n_evals: samples.len(),
        per_component_variance,
    })
}

/// Average of the task's analytic gradient at kernel-perturbed points.
/// Importance and gaussian modes both draw from the kernel, so the kernel
/// weight cancels; uniform mode keeps it.
pub fn estimate_gradient_reparam(
    task: &dyn Task,
    theta: &[f64],
    kernel: &SmoothingKernel,
    config: &EstimatorConfig,
    rng_seed: u64,
) -> Result<GradientEstimate> {
    check_theta(task, theta, Some(kernel))?;
    if !task.has_gradient() {
        return Err(Error::UnsupportedEstimator {
            estimator: EstimatorKind::Reparam.as_str().into(),
            task: task.info().name.clone(),
        });
    }
    check_count(config.sample_count, config.antithetic)?;
    let dim = theta.len();
    let sigma = kernel.sigma();
    let mode = match config.sampling_mode {
        SamplingMode::Uniform => SamplingMode::Uniform,
        _ => SamplingMode::Gaussian,
    };
    let samples = draw(kernel, config, mode, rng_seed)?;
    let points = shifted(theta, &samples);
    let grads = evaluate_all(task, &points, |p| {
        let g = task.loss_gradient(p)?;
        if g.len() != dim {
            return Err(TaskError::Dimension {
                expected: dim,
                found: g.len(),
            });
        }
        Ok(g)
    })
    .map_err(|(i, e)| Error::task(Some(&samples[i].tau), e))?;
    let weight = |tau: &[f64]| match mode {
        SamplingMode::Uniform => uniform_weight(tau, sigma),
        _ => 1.0,
    };
    let units: Vec<Vec<f64>> = if config.antithetic {
        samples
            .chunks_exact(2)
            .zip(grads.chunks_exact(2))
            .map(|(pair, g)| {
                let w = weight(&pair[0].tau);
                (0..dim).map(|j| 0.5 * w * (g[0][j] + g[1][j])).collect()
            })
            .collect()
    } else {
        samples
            .iter()
            .zip(&grads)
            .map(|(s, g)| {
                let w = weight(&s.tau);
                g.iter().map(|v| w * v).collect()
            })
            .collect()
    };
    let (grad, per_component_variance) = mean_and_variance(&units, dim);
    Ok(GradientEstimate {
        grad,
        n_evals: samples.len(),
        per_component_variance,
    })
}

/// Central differences of the raw loss with a common absolute step.
pub fn estimate_gradient_fd(task: &dyn Task, theta: &[f64], step: f64) -> Result<GradientEstimate> {
    estimate_gradient_fd_steps(task, theta, &vec![step; theta.len()])
}

/// Central differences with a per-dimension absolute step.
pub fn estimate_gradient_fd_steps(task: &dyn Task, theta: &[f64], steps: &[f64]) -> Result<GradientEstimate> {
    check_theta(task, theta, None)?;
    if steps.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: steps.len(),
        });
    }
    for &s in steps {
        check_step(s)?;
    }
    let dim = theta.len();
    let mut points = Vec::with_capacity(2 * dim);
    for j in 0..dim {
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[j] += steps[j];
        minus[j] -= steps[j];
        points.push(plus);
        points.push(minus);
    }
    let losses = evaluate_all(task, &points, |p| task.loss(p)).map_err(|(i, e)| {
        let mut tau = vec![0.0; dim];
        tau[i / 2] = if i % 2 == 0 { steps[i / 2] } else { -steps[i / 2] };
        Error::task(Some(&tau), e)
    })?;
    let grad = (0..dim)
        .map(|j| (losses[2 * j] - losses[2 * j + 1]) / (2.0 * steps[j]))
        .collect();
    Ok(GradientEstimate::deterministic(grad, 2 * dim))
}

/// Simultaneous perturbation along a Rademacher direction.
pub fn estimate_gradient_spsa(task: &dyn Task, theta: &[f64], step: f64, rng_seed: u64) -> Result<GradientEstimate> {
    estimate_gradient_spsa_steps(task, theta, &vec![step; theta.len()], rng_seed)
}

pub fn estimate_gradient_spsa_steps(
    task: &dyn Task,
    theta: &[f64],
    steps: &[f64],
    rng_seed: u64,
) -> Result<GradientEstimate> {
    check_theta(task, theta, None)?;
    if steps.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: steps.len(),
        });
    }
    for &s in steps {
        check_step(s)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let delta: Vec<f64> = (0..theta.len())
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let offset: Vec<f64> = steps.iter().zip(&delta).map(|(h, d)| h * d).collect();
    let plus: Vec<f64> = theta.iter().zip(&offset).map(|(t, o)| t + o).collect();
    let minus: Vec<f64> = theta.iter().zip(&offset).map(|(t, o)| t - o).collect();
    let lp = task.loss(&plus).map_err(|e| Error::task(Some(&offset), e))?;
    let neg: Vec<f64> = offset.iter().map(|o| -o).collect();
    let lm = task.loss(&minus).map_err(|e| Error::task(Some(&neg), e))?;
    let grad = steps
        .iter()
        .zip(&delta)
        .map(|(h, d)| (lp - lm) / (2.0 * h * d))
        .collect();
    Ok(GradientEstimate::deterministic(grad, 2))
}

/// The task's unsmoothed analytic gradient.
pub fn estimate_gradient_hard(task: &dyn Task, theta: &[f64]) -> Result<GradientEstimate> {
    check_theta(task, theta, None)?;
    if !task.has_gradient() {
        return Err(Error::UnsupportedEstimator {
            estimator: EstimatorKind::Hard.as_str().into(),
            task: task.info().name.clone(),
        });
    }
    let g = task.loss_gradient(theta).map_err(|e| Error::task(None, e))?;
    Ok(GradientEstimate::deterministic(g, 1))
}

/// Dispatches on `config.estimator_kind`. FD and SPSA steps are scaled by
/// each dimension's domain extent.
pub fn estimate_gradient(
    task: &dyn Task,
    theta: &[f64],
    kernel: &SmoothingKernel,
    config: &EstimatorConfig,
    rng_seed: u64,
) -> Result<GradientEstimate> {
    let steps = || -> Vec<f64> { task.info().extent().iter().map(|e| e * config.step).collect() };
    match config.estimator_kind {
        EstimatorKind::Score => estimate_gradient_score(task, theta, kernel, config, rng_seed),
        EstimatorKind::Reparam => estimate_gradient_reparam(task, theta, kernel, config, rng_seed),
        EstimatorKind::Fd => estimate_gradient_fd_steps(task, theta, &steps()),
        EstimatorKind::Spsa => estimate_gradient_spsa_steps(task, theta, &steps(), rng_seed),
        EstimatorKind::Hard => estimate_gradient_hard(task, theta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{self, ConstantTask, QuadraticTask, StepPlateauTask, TaskInfo};

    struct Linear {
        info: TaskInfo,
        slope: Vec<f64>,
    }

    impl Linear {
        fn new(slope: Vec<f64>) -> Self {
            let n = slope.len();
            Self {
                info: TaskInfo::new("linear", vec![-5.0; n], vec![5.0; n], vec![0.0; n]),
                slope,
            }
        }
    }

    impl Task for Linear {
        fn info(&self) -> &TaskInfo {
            &self.info
        }
        fn loss(&self, theta: &[f64]) -> std::result::Result<f64, TaskError> {
            Ok(theta.iter().zip(&self.slope).map(|(t, a)| t * a).sum())
        }
        fn has_gradient(&self) -> bool {
            true
        }
        fn loss_gradient(&self, _theta: &[f64]) -> std::result::Result<Vec<f64>, TaskError> {
            Ok(self.slope.clone())
        }
        fn initial_theta(&self, _seed: u64) -> Vec<f64> {
            vec![0.0; self.slope.len()]
        }
    }

    /// Even around 0: `L(tau) = L(-tau)`.
    struct Even;

    impl Task for Even {
        fn info(&self) -> &TaskInfo {
            static INFO: std::sync::OnceLock<TaskInfo> = std::sync::OnceLock::new();
            INFO.get_or_init(|| TaskInfo::new("even", vec![-5.0; 2], vec![5.0; 2], vec![0.0; 2]))
        }
        fn loss(&self, theta: &[f64]) -> std::result::Result<f64, TaskError> {
            Ok((theta[0] * theta[1]).cos() + theta[0].abs().floor())
        }
        fn initial_theta(&self, _seed: u64) -> Vec<f64> {
            vec![0.0; 2]
        }
    }

    struct Failing;

    impl Task for Failing {
        fn info(&self) -> &TaskInfo {
            static INFO: std::sync::OnceLock<TaskInfo> = std::sync::OnceLock::new();
            INFO.get_or_init(|| TaskInfo::new("failing", vec![-1.0], vec![1.0], vec![0.0]))
        }
        fn loss(&self, theta: &[f64]) -> std::result::Result<f64, TaskError> {
            if theta[0] > 0.0 {
                Err(TaskError::Other("boom".into()))
            } else {
                Ok(0.0)
            }
        }
        fn initial_theta(&self, _seed: u64) -> Vec<f64> {
            vec![0.0]
        }
    }

    fn all_modes() -> [SamplingMode; 3] {
        [SamplingMode::Importance, SamplingMode::Gaussian, SamplingMode::Uniform]
    }

    #[test]
    fn constant_loss_gives_exact_zero() {
        let task = ConstantTask::new(3, 0.7);
        let kernel = SmoothingKernel::fixed(vec![0.3, 1.0, 2.0]).unwrap();
        for mode in all_modes() {
            for norm in [Normalization::Unbiased, Normalization::Alg1Raw] {
                let cfg = EstimatorConfig {
                    sample_count: 64,
                    sampling_mode: mode,
                    normalization: norm,
                    ..EstimatorConfig::default()
                };
                let g = estimate_gradient_score(&task, &[0.1, 0.2, 0.3], &kernel, &cfg, 5).unwrap();
                assert!(g.grad.iter().all(|v| *v == 0.0));
                assert!(g.per_component_variance.iter().all(|v| *v == 0.0));
                assert_eq!(g.n_evals, 64);
            }
        }
    }

    #[test]
    fn even_loss_cancels_under_antithetics() {
        let kernel = SmoothingKernel::fixed(vec![0.7, 1.3]).unwrap();
        for mode in all_modes() {
            let cfg = EstimatorConfig {
                sample_count: 32,
                sampling_mode: mode,
                ..EstimatorConfig::default()
            };
            let g = estimate_gradient_score(&Even, &[0.0, 0.0], &kernel, &cfg, 9).unwrap();
            assert_eq!(g.grad, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn linear_slope_sign_is_positive() {
        // importance + antithetic on a 1D linear loss is exact per pair up to the
        // Rayleigh magnitude; the mean over many pairs approaches the slope
        let task = Linear::new(vec![1.5]);
        let kernel = SmoothingKernel::fixed(vec![1.0]).unwrap();
        let g = estimate_gradient_score(&task, &[0.2], &kernel, &EstimatorConfig::score(20_000), 1).unwrap();
        let se = g.standard_error(10_000)[0];
        assert!((g.grad[0] - 1.5).abs() < 4.0 * se, "{} ± {se}", g.grad[0]);
    }

    #[test]
    fn reparam_linear_is_exact() {
        let task = Linear::new(vec![2.5, -1.0]);
        let kernel = SmoothingKernel::fixed(vec![0.5, 3.0]).unwrap();
        let cfg = EstimatorConfig {
            sample_count: 10,
            estimator_kind: EstimatorKind::Reparam,
            ..EstimatorConfig::default()
        };
        let g = estimate_gradient_reparam(&task, &[0.0, 1.0], &kernel, &cfg, 3).unwrap();
        assert_eq!(g.grad, vec![2.5, -1.0]);
        assert_eq!(g.n_evals, 10);
    }

    #[test]
    fn reparam_quadratic_is_exact_with_antithetics() {
        // gradient 2(theta - tau) is odd in tau, so each pair averages to 2 theta
        let task = QuadraticTask::new(1);
        let kernel = SmoothingKernel::fixed(vec![0.8]).unwrap();
        let cfg = EstimatorConfig::score(100);
        let g = estimate_gradient_reparam(&task, &[0.75], &kernel, &cfg, 0).unwrap();
        assert!((g.grad[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn reparam_requires_gradient() {
        let task = tasks::disc2d();
        let kernel = SmoothingKernel::fixed(vec![0.1, 0.1]).unwrap();
        let err = estimate_gradient_reparam(&task, &[0.5, 0.5], &kernel, &EstimatorConfig::default(), 0);
        assert!(matches!(err, Err(Error::UnsupportedEstimator { .. })));
        assert!(matches!(
            estimate_gradient_hard(&task, &[0.5, 0.5]),
            Err(Error::UnsupportedEstimator { .. })
        ));
    }

    #[test]
    fn fd_quadratic_identity() {
        let task = QuadraticTask::new(1);
        let g = estimate_gradient_fd(&task, &[1.0], 1e-3).unwrap();
        assert!((g.grad[0] - 2.0).abs() < 1e-5);
        assert_eq!(g.n_evals, 2);
        let task = QuadraticTask::new(2);
        assert_eq!(estimate_gradient_fd(&task, &[1.0, 0.5], 1e-3).unwrap().n_evals, 4);
    }

    #[test]
    fn fd_is_zero_on_disc_plateau() {
        let task = tasks::disc2d();
        let g = estimate_gradient_fd(&task, &task.plateau_theta().unwrap(), 1e-3).unwrap();
        assert_eq!(g.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn spsa_properties() {
        let c = ConstantTask::new(4, 1.0);
        let g = estimate_gradient_spsa(&c, &[0.0; 4], 1e-2, 3).unwrap();
        assert!(g.grad.iter().all(|v| *v == 0.0));
        assert_eq!(g.n_evals, 2);
        for seed in 0..8 {
            let lin = Linear::new(vec![-0.75]);
            let g = estimate_gradient_spsa(&lin, &[0.3], 0.01, seed).unwrap();
            assert!((g.grad[0] + 0.75).abs() < 1e-12);
        }
        let step = StepPlateauTask::default();
        assert_eq!(estimate_gradient_spsa(&step, &[1.0], 1e-3, 0).unwrap().grad, vec![0.0]);
    }

    #[test]
    fn invalid_counts_and_steps() {
        let task = QuadraticTask::new(1);
        let kernel = SmoothingKernel::fixed(vec![1.0]).unwrap();
        let odd = EstimatorConfig::score(3);
        assert!(matches!(
            estimate_gradient_score(&task, &[0.0], &kernel, &odd, 0),
            Err(Error::InvalidCount { .. })
        ));
        assert!(matches!(estimate_gradient_fd(&task, &[0.0], 0.0), Err(Error::InvalidStep(_))));
        assert!(matches!(estimate_gradient_spsa(&task, &[0.0], -1.0, 0), Err(Error::InvalidStep(_))));
        let no_at = EstimatorConfig {
            antithetic: false,
            ..odd
        };
        assert_eq!(estimate_gradient_score(&task, &[0.0], &kernel, &no_at, 0).unwrap().n_evals, 3);
    }

    #[test]
    fn task_failure_carries_offset() {
        let kernel = SmoothingKernel::fixed(vec![0.5]).unwrap();
        let err = estimate_gradient_score(&Failing, &[0.0], &kernel, &EstimatorConfig::score(8), 0).unwrap_err();
        match err {
            Error::Task { tau: Some(tau), .. } => assert!(tau[0] < 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let task = QuadraticTask::new(2);
        let kernel = SmoothingKernel::fixed(vec![0.5]).unwrap();
        assert!(matches!(
            estimate_gradient_score(&task, &[0.0, 0.0], &kernel, &EstimatorConfig::default(), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn smoothed_value_of_constant_and_quadratic() {
        let c = ConstantTask::new(2, 0.25);
        let kernel = SmoothingKernel::fixed(vec![1.0, 1.0]).unwrap();
        for mode in [SamplingMode::Importance, SamplingMode::Gaussian] {
            let cfg = EstimatorConfig {
                sample_count: 6,
                sampling_mode: mode,
                ..EstimatorConfig::default()
            };
            assert_eq!(smoothed_value(&c, &[0.0, 0.0], &kernel, &cfg, 1).unwrap().value, 0.25);
        }
        let q = QuadraticTask::new(1);
        let kernel = SmoothingKernel::fixed(vec![1.0]).unwrap();
        let cfg = EstimatorConfig {
            sample_count: 200_000,
            sampling_mode: SamplingMode::Gaussian,
            ..EstimatorConfig::default()
        };
        let v = smoothed_value(&q, &[0.0], &kernel, &cfg, 2).unwrap();
        assert!((v.value - 1.0).abs() < 0.01, "{}", v.value);
        assert!(!v.out_of_domain);
        assert!(smoothed_value(&q, &[7.0], &kernel, &cfg, 2).unwrap().out_of_domain);
    }

    #[test]
    fn alg1_raw_is_a_rescaled_unbiased_estimate() {
        let task = tasks::disc2d();
        let kernel = SmoothingKernel::fixed(vec![0.2, 0.4]).unwrap();
        let theta = [0.3, 0.35];
        for mode in all_modes() {
            let unbiased = EstimatorConfig {
                sample_count: 16,
                sampling_mode: mode,
                ..EstimatorConfig::default()
            };
            let raw = EstimatorConfig {
                normalization: Normalization::Alg1Raw,
                ..unbiased.clone()
            };
            let a = estimate_gradient_score(&task, &theta, &kernel, &unbiased, 4).unwrap();
            let b = estimate_gradient_score(&task, &theta, &kernel, &raw, 4).unwrap();
            for j in 0..2 {
                let scale = kernel.sigma()[j] * (2.0 * PI).sqrt() / 2.0;
                assert!((a.grad[j] * scale - b.grad[j]).abs() <= 1e-12 * (1.0 + b.grad[j].abs()));
            }
        }
    }

    #[test]
    fn alg1_raw_importance_matches_pseudocode() {
        // G = sum over pairs of (L(theta + tau) - L(theta - tau)) sign(tau), returned as G / N
        let task = tasks::disc2d();
        let kernel = SmoothingKernel::fixed(vec![0.3, 0.3]).unwrap();
        let cfg = EstimatorConfig {
            sample_count: 8,
            normalization: Normalization::Alg1Raw,
            ..EstimatorConfig::default()
        };
        let theta = [0.35, 0.45];
        let est = estimate_gradient_score(&task, &theta, &kernel, &cfg, 12).unwrap();
        let samples = crate::kernel::sample_offsets(&kernel, 8, SamplingMode::Importance, true, 12).unwrap();
        let mut g = [0.0; 2];
        for pair in samples.chunks(2) {
            let tau = &pair[0].tau;
            let plus: Vec<f64> = theta.iter().zip(tau).map(|(t, o)| t + o).collect();
            let minus: Vec<f64> = theta.iter().zip(tau).map(|(t, o)| t - o).collect();
            let d = task.loss(&plus).unwrap() - task.loss(&minus).unwrap();
            for j in 0..2 {
                g[j] += d * tau[j].signum();
            }
        }
        for (e, raw) in est.grad.iter().zip(&g) {
            assert!((e - raw / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn estimates_are_bit_deterministic() {
        let task = tasks::sort();
        let theta = task.initial_theta(1);
        let kernel = SmoothingKernel::fixed(vec![0.2; 16]).unwrap();
        let cfg = EstimatorConfig::score(256);
        let a = estimate_gradient_score(&task, &theta, &kernel, &cfg, 77).unwrap();
        let b = estimate_gradient_score(&task, &theta, &kernel, &cfg, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluation_counts() {
        let task = tasks::sort();
        let theta = task.initial_theta(0);
        let kernel = SmoothingKernel::fixed(vec![0.5; 16]).unwrap();
        let base = EstimatorConfig::default();
        let check = |kind: EstimatorKind, expected: usize| {
            let cfg = EstimatorConfig {
                estimator_kind: kind,
                ..base.clone()
            };
            assert_eq!(estimate_gradient(&task, &theta, &kernel, &cfg, 0).unwrap().n_evals, expected);
        };
        check(EstimatorKind::Score, 2);
        check(EstimatorKind::Fd, 32);
        check(EstimatorKind::Spsa, 2);
    }
}
