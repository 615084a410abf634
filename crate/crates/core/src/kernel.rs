//! Separable Gaussian smoothing kernel over parameter space.
//!
//! The kernel is a product of independent 1D Gaussians with per-dimension
//! bandwidth `sigma`. Besides evaluating the kernel and its gradient, this
//! module provides the samplers used by the gradient estimators:
//!
//! - `Importance`: each `|tau_j|` is drawn from the positivized 1D kernel
//!   gradient `|d kappa / d tau|`, which is a Rayleigh(`sigma_j`) law on each
//!   halfspace. Draws use the closed-form inverse CDF.
//! - `Gaussian`: `tau ~ N(0, diag(sigma^2))`, i.e. proportional to the kernel.
//! - `Uniform`: `tau_j ~ U(-3 sigma_j, 3 sigma_j)`.
//!
//! Antithetic sampling emits exact `(tau, -tau)` pairs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the uniform ablation sampler in units of sigma.
pub const UNIFORM_HALF_WIDTH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Importance,
    Gaussian,
    Uniform,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::Importance => "importance",
            SamplingMode::Gaussian => "gaussian",
            SamplingMode::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "importance" => Ok(SamplingMode::Importance),
            "gaussian" => Ok(SamplingMode::Gaussian),
            "uniform" => Ok(SamplingMode::Uniform),
            other => Err(format!("unknown sampling mode `{other}`")),
        }
    }
}

/// Per-dimension Gaussian bandwidths together with the range the schedule
/// may move them in.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingKernel {
    sigma: Vec<f64>,
    sigma0: Vec<f64>,
    sigma_min: Vec<f64>,
}

impl SmoothingKernel {
    /// Kernel starting at `sigma0`, allowed to shrink down to `sigma_min`.
    pub fn new(sigma0: Vec<f64>, sigma_min: Vec<f64>) -> Result<Self> {
        if sigma0.len() != sigma_min.len() {
            return Err(Error::DimensionMismatch {
                expected: sigma0.len(),
                found: sigma_min.len(),
            });
        }
        check_bandwidth(&sigma0)?;
        check_bandwidth(&sigma_min)?;
        for (index, (&s0, &sm)) in sigma0.iter().zip(&sigma_min).enumerate() {
            if sm > s0 {
                return Err(Error::BandwidthOutOfRange {
                    index,
                    value: sm,
                    min: 0.0,
                    max: s0,
                });
            }
        }
        Ok(Self {
            sigma: sigma0.clone(),
            sigma0,
            sigma_min,
        })
    }

    /// Kernel with a fixed bandwidth (no room for decay).
    pub fn fixed(sigma: Vec<f64>) -> Result<Self> {
        Self::new(sigma.clone(), sigma)
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma0(&self) -> &[f64] {
        &self.sigma0
    }

    pub fn sigma_min(&self) -> &[f64] {
        &self.sigma_min
    }

    /// Moves the current bandwidth; must stay inside `[sigma_min, sigma0]`.
    pub fn set_sigma(&mut self, sigma: &[f64]) -> Result<()> {
        if sigma.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: sigma.len(),
            });
        }
        check_bandwidth(sigma)?;
        for (index, &s) in sigma.iter().enumerate() {
            let (lo, hi) = (self.sigma_min[index], self.sigma0[index]);
            if s < lo || s > hi {
                return Err(Error::BandwidthOutOfRange {
                    index,
                    value: s,
                    min: lo,
                    max: hi,
                });
            }
        }
        self.sigma.copy_from_slice(sigma);
        Ok(())
    }
}

pub(crate) fn check_bandwidth(sigma: &[f64]) -> Result<()> {
    match sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        Some(index) => Err(Error::InvalidBandwidth {
            index,
            value: sigma[index],
        }),
        None => Ok(()),
    }
}

fn check_dims(tau: &[f64], sigma: &[f64]) -> Result<()> {
    if tau.len() != sigma.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma.len(),
            found: tau.len(),
        });
    }
    check_bandwidth(sigma)
}

#[inline]
fn gauss_1d(t: f64, s: f64) -> f64 {
    (-(t * t) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
}

/// Product of 1D Gaussian densities `N(tau_i; 0, sigma_i^2)`.
pub fn eval_kernel(tau: &[f64], sigma: &[f64]) -> Result<f64> {
    check_dims(tau, sigma)?;
    Ok(tau.iter().zip(sigma).map(|(&t, &s)| gauss_1d(t, s)).product())
}

/// Gradient of [`eval_kernel`] with respect to `tau`. Odd in every component.
pub fn eval_kernel_grad(tau: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    check_dims(tau, sigma)?;
    let marginals: Vec<f64> = tau.iter().zip(sigma).map(|(&t, &s)| gauss_1d(t, s)).collect();
    let grad = (0..tau.len())
        .map(|j| {
            let (t, s) = (tau[j], sigma[j]);
            let own = -t / (s * s * s * (2.0 * PI).sqrt()) * (-(t * t) / (2.0 * s * s)).exp();
            let rest: f64 = marginals
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, m)| m)
                .product();
            own * rest
        })
        .collect();
    Ok(grad)
}

/// Inverse CDF of the positivized kernel gradient on one halfspace:
/// `sqrt(-2 sigma^2 ln xi)`. `xi = 1` maps to 0.
pub fn inverse_cdf_sample(xi: f64, sigma: f64) -> Result<f64> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::InvalidUniform(xi));
    }
    check_bandwidth(&[sigma])?;
    // ln(1) is exactly 0; max() guards against -0.0 under the sqrt.
    Ok((-2.0 * sigma * sigma * xi.ln()).max(0.0).sqrt())
}

/// Normalized density of `|d kappa / d tau|` over the whole real line:
/// `|tau| / (2 sigma^2) * exp(-tau^2 / (2 sigma^2))`.
pub fn positivized_density(tau: f64, sigma: f64) -> Result<f64> {
    check_bandwidth(&[sigma])?;
    Ok(tau.abs() / (2.0 * sigma * sigma) * (-(tau * tau) / (2.0 * sigma * sigma)).exp())
}

/// Closed-form CDF of `|tau|` under importance sampling (Rayleigh).
pub fn rayleigh_cdf(r: f64, sigma: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        1.0 - (-(r * r) / (2.0 * sigma * sigma)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSample {
    pub tau: Vec<f64>,
    pub antithetic_partner_index: Option<usize>,
}

/// Draws `count` offsets for the given kernel. Deterministic in `rng_seed`.
pub fn sample_offsets(
    kernel: &SmoothingKernel,
    count: usize,
    mode: SamplingMode,
    antithetic: bool,
    rng_seed: u64,
) -> Result<Vec<OffsetSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_offsets_with(&mut rng, kernel.sigma(), count, mode, antithetic)
}

pub(crate) fn sample_offsets_with<R: Rng + ?Sized>(
    rng: &mut R,
    sigma: &[f64],
    count: usize,
    mode: SamplingMode,
    antithetic: bool,
) -> Result<Vec<OffsetSample>> {
    check_bandwidth(sigma)?;
    check_count(count, antithetic)?;
    let mut out = Vec::with_capacity(count);
    if antithetic {
        for pair in 0..count / 2 {
            let tau = draw_offset(rng, sigma, mode)?;
            let neg = tau.iter().map(|t| -t).collect();
            out.push(OffsetSample {
                tau,
                antithetic_partner_index: Some(2 * pair + 1),
            });
            out.push(OffsetSample {
                tau: neg,
                antithetic_partner_index: Some(2 * pair),
            });
        }
    } else {
        for _ in 0..count {
            out.push(OffsetSample {
                tau: draw_offset(rng, sigma, mode)?,
                antithetic_partner_index: None,
            });
        }
    }
    Ok(out)
}

pub(crate) fn check_count(count: usize, antithetic: bool) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidCount {
            count,
            reason: "at least one sample is required",
        });
    }
    if antithetic && (count < 2 || !count.is_multiple_of(2)) {
        return Err(Error::InvalidCount {
            count,
            reason: "antithetic sampling needs an even count >= 2",
        });
    }
    Ok(())
}

/// Uniform variate on (0, 1].
fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn draw_offset<R: Rng + ?Sized>(rng: &mut R, sigma: &[f64], mode: SamplingMode) -> Result<Vec<f64>> {
    sigma
        .iter()
        .map(|&s| match mode {
            SamplingMode::Importance => {
                let magnitude = inverse_cdf_sample(open_uniform(rng), s)?;
                Ok(if rng.random::<bool>() { magnitude } else { -magnitude })
            }
            SamplingMode::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(z * s)
            }
            SamplingMode::Uniform => {
                let u: f64 = rng.random();
                Ok((2.0 * u - 1.0) * UNIFORM_HALF_WIDTH * s)
            }
        })
        .collect()
}
