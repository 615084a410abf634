use super::{Task, TaskInfo};
use crate::error::TaskError;

const DOMAIN: f64 = 2.0;

/// 1D well of width `2 * half_width` at the reference, value 1 elsewhere.
#[derive(Debug, Clone)]
pub struct StepPlateauTask {
    info: TaskInfo,
    pub half_width: f64,
}

impl Default for StepPlateauTask {
    fn default() -> Self {
        Self {
            info: TaskInfo::new("step", vec![-DOMAIN], vec![DOMAIN], vec![0.0]),
            half_width: 0.25,
        }
    }
}

impl Task for StepPlateauTask {
    fn info(&self) -> &TaskInfo {
        &self.info
    }

    fn loss(&self, theta: &[f64]) -> Result<f64, TaskError> {
        self.info.check(theta)?;
        Ok(if (theta[0] - self.info.theta_ref[0]).abs() < self.half_width {
            0.0
        } else {
            1.0
        })
    }

    fn initial_theta(&self, _seed: u64) -> Vec<f64> {
        vec![1.0]
    }

    fn plateau_theta(&self) -> Option<Vec<f64>> {
        Some(vec![1.0])
    }
}

/// `sum_i (theta_i - ref_i)^2` with its analytic gradient.
#[derive(Debug, Clone)]
pub struct QuadraticTask {
    info: TaskInfo,
}

impl QuadraticTask {
    pub fn new(dim: usize) -> Self {
        let name = if dim == 1 { "quadratic".to_string() } else { format!("quadratic{dim}d") };
        Self {
            info: TaskInfo::new(&name, vec![-DOMAIN; dim], vec![DOMAIN; dim], vec![0.0; dim]),
        }
    }
}

impl Task for QuadraticTask {
    fn info(&self) -> &TaskInfo {
        &self.info
    }

    fn loss(&self, theta: &[f64]) -> Result<f64, TaskError> {
        self.info.check(theta)?;
        Ok(theta.iter().zip(&self.info.theta_ref).map(|(t, r)| (t - r) * (t - r)).sum())
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn loss_gradient(&self, theta: &[f64]) -> Result<Vec<f64>, TaskError> {
        self.info.check(theta)?;
        Ok(theta.iter().zip(&self.info.theta_ref).map(|(t, r)| 2.0 * (t - r)).collect())
    }

    fn initial_theta(&self, _seed: u64) -> Vec<f64> {
        vec![1.0; self.info.dim()]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Smooth counterpart of [`StepPlateauTask`]: a logistic well.
#[derive(Debug, Clone)]
pub struct SigmoidStepTask {
    info: TaskInfo,
    pub half_width: f64,
    pub softness: f64,
}

impl Default for SigmoidStepTask {
    fn default() -> Self {
        Self {
            info: TaskInfo::new("sigmoid", vec![-DOMAIN], vec![DOMAIN], vec![0.0]),
            half_width: 0.25,
            softness: 0.05,
        }
    }
}

impl Task for SigmoidStepTask {
    fn info(&self) -> &TaskInfo {
        &self.info
    }

    fn loss(&self, theta: &[f64]) -> Result<f64, TaskError> {
        self.info.check(theta)?;
        let x = theta[0] - self.info.theta_ref[0];
        let (w, k) = (self.half_width, self.softness);
        Ok(1.0 - (sigmoid((x + w) / k) - sigmoid((x - w) / k)))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn loss_gradient(&self, theta: &[f64]) -> Result<Vec<f64>, TaskError> {
        self.info.check(theta)?;
        let x = theta[0] - self.info.theta_ref[0];
        let (w, k) = (self.half_width, self.softness);
        let ds = |z: f64| sigmoid(z) * (1.0 - sigmoid(z)) / k;
        Ok(vec![-(ds((x + w) / k) - ds((x - w) / k))])
    }

    fn initial_theta(&self, _seed: u64) -> Vec<f64> {
        vec![1.0]
    }
}

/// Constant objective; every estimator must return exactly zero.
#[derive(Debug, Clone)]
pub struct ConstantTask {
    info: TaskInfo,
    pub value: f64,
}

impl ConstantTask {
    pub fn new(dim: usize, value: f64) -> Self {
        Self {
            info: TaskInfo::new("constant", vec![-DOMAIN; dim], vec![DOMAIN; dim], vec![0.0; dim]),
            value,
        }
    }
}

impl Task for ConstantTask {
    fn info(&self) -> &TaskInfo {
        &self.info
    }

    fn loss(&self, theta: &[f64]) -> Result<f64, TaskError> {
        self.info.check(theta)?;
        Ok(self.value)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn loss_gradient(&self, theta: &[f64]) -> Result<Vec<f64>, TaskError> {
        self.info.check(theta)?;
        Ok(vec![0.0; theta.len()])
    }

    fn initial_theta(&self, _seed: u64) -> Vec<f64> {
        vec![1.0; self.info.dim()]
    }
}
