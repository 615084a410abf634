//! Brute-force convolution of a task's loss with the Gaussian kernel on a
//! tensor-product trapezoid grid. Slow but free of sampling noise; used as
//! ground truth for the Monte Carlo estimators.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{check_bandwidth, eval_kernel, eval_kernel_grad};
use crate::tasks::Task;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    /// Grid points per dimension, endpoints included.
    pub points_per_dim: usize,
    /// Integration range `±range_sigmas * sigma_j`.
    pub range_sigmas: f64,
}

impl QuadratureGrid {
    /// 10^4 points over ±6 sigma, the 1D default.
    pub const fn dense_1d() -> Self {
        Self {
            points_per_dim: 10_000,
            range_sigmas: 6.0,
        }
    }

    /// Roughly `budget` total nodes split evenly over `dim` dimensions.
    pub fn for_dim(dim: usize, budget: usize) -> Self {
        let per = (budget as f64).powf(1.0 / dim.max(1) as f64).floor() as usize;
        Self {
            points_per_dim: per.max(3),
            range_sigmas: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convolved {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Smoothed loss and its gradient at `theta`.
pub fn convolve(task: &dyn Task, theta: &[f64], sigma: &[f64], grid: QuadratureGrid) -> Result<Convolved> {
    let dim = theta.len();
    if sigma.len() != dim || task.info().dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: task.info().dim(),
            found: dim,
        });
    }
    check_bandwidth(sigma)?;
    let m = grid.points_per_dim;
    if m < 2 {
        return Err(Error::InvalidCount {
            count: m,
            reason: "quadrature needs at least two points per dimension",
        });
    }
    let nodes: Vec<Vec<f64>> = sigma
        .iter()
        .map(|s| {
            let a = grid.range_sigmas * s;
            (0..m).map(|i| -a + 2.0 * a * i as f64 / (m - 1) as f64).collect()
        })
        .collect();
    let h: Vec<f64> = sigma.iter().map(|s| 2.0 * grid.range_sigmas * s / (m - 1) as f64).collect();
    let total = m.checked_pow(dim as u32).ok_or(Error::InvalidCount {
        count: m,
        reason: "quadrature grid too large",
    })?;

    let terms: Vec<Result<(f64, Vec<f64>)>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = flat;
            let mut tau = vec![0.0; dim];
            let mut weight = 1.0;
            for j in 0..dim {
                let i = idx % m;
                idx /= m;
                tau[j] = nodes[j][i];
                weight *= if i == 0 || i == m - 1 { 0.5 * h[j] } else { h[j] };
            }
            let point: Vec<f64> = theta.iter().zip(&tau).map(|(t, o)| t - o).collect();
            let loss = task.loss(&point).map_err(|e| Error::task(Some(&tau), e))?;
            let k = eval_kernel(&tau, sigma)?;
            let dk = eval_kernel_grad(&tau, sigma)?;
            Ok((weight * k * loss, dk.iter().map(|d| weight * d * loss).collect()))
        })
        .collect();

    let mut value = 0.0;
    let mut grad = vec![0.0; dim];
    for t in terms {
        let (v, g) = t?;
        value += v;
        for j in 0..dim {
            grad[j] += g[j];
        }
    }
    Ok(Convolved { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{ConstantTask, QuadraticTask, StepPlateauTask, Task};

    fn norm_cdf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26 is too coarse; integrate instead
        let n = 200_000;
        let a = -12.0;
        let h = (x - a) / n as f64;
        let f = |t: f64| (-(t * t) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = 0.5 * (f(a) + f(x));
        for i in 1..n {
            acc += f(a + i as f64 * h);
        }
        acc * h
    }

    #[test]
    fn constant_and_quadratic_closed_forms() {
        let c = ConstantTask::new(1, 0.3);
        let r = convolve(&c, &[0.2], &[0.4], QuadratureGrid::dense_1d()).unwrap();
        assert!((r.value - 0.3).abs() < 1e-8);
        assert!(r.grad[0].abs() < 1e-12);

        let q = QuadraticTask::new(1);
        let r = convolve(&q, &[1.0], &[0.5], QuadratureGrid::dense_1d()).unwrap();
        assert!((r.value - 1.25).abs() < 1e-6, "{}", r.value);
        assert!((r.grad[0] - 2.0).abs() < 1e-6, "{}", r.grad[0]);
    }

    #[test]
    fn step_matches_normal_cdf() {
        // Ls(theta) = 1 - [Phi((w - theta)/s) - Phi((-w - theta)/s)]
        let step = StepPlateauTask::default();
        let (s, w) = (0.3, step.half_width);
        for theta in [-0.7, 0.0, 0.4, 1.0] {
            let r = convolve(&step, &[theta], &[s], QuadratureGrid::dense_1d()).unwrap();
            let exact = 1.0 - (norm_cdf((w - theta) / s) - norm_cdf((-w - theta) / s));
            // each jump costs up to one node spacing of kernel mass
            let h = 12.0 * s / 9999.0;
            assert!((r.value - exact).abs() < 2.0 * h / s, "{theta}: {} vs {exact}", r.value);
        }
    }

    #[test]
    fn two_dim_quadratic() {
        let q = QuadraticTask::new(2);
        let r = convolve(&q, &[0.5, -1.0], &[0.3, 0.6], QuadratureGrid::for_dim(2, 250_000)).unwrap();
        assert!((r.grad[0] - 1.0).abs() < 1e-3, "{:?}", r.grad);
        assert!((r.grad[1] + 2.0).abs() < 1e-3, "{:?}", r.grad);
        assert_eq!(q.info().dim(), 2);
    }
}
