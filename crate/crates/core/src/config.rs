//! Flat JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, EstimatorKind, Normalization};
use crate::kernel::SamplingMode;
use crate::optimizer::DEFAULT_LR;
use crate::schedule::{BandwidthSchedule, ScheduleKind};
use crate::tasks::{self, PixelNoise, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: String,
    pub estimator_kind: EstimatorKind,
    pub sampling_mode: SamplingMode,
    pub antithetic: bool,
    pub normalization: Normalization,
    /// Loss evaluations per gradient estimate.
    pub sample_count: usize,
    pub iters: usize,
    pub lr: f64,
    /// Initial bandwidth as a fraction of each dimension's domain extent.
    pub sigma0: f64,
    /// Final bandwidth, same units as `sigma0`.
    pub sigma_min: f64,
    pub schedule: ScheduleKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// FD/SPSA probe distance as a fraction of the domain extent.
    pub step: f64,
    /// Std of additive pixel noise on image tasks; 0 disables it.
    pub pixel_noise: f64,
    /// Starting point; the task's own initializer when absent.
    pub theta0: Option<Vec<f64>>,
    /// Seeds per variant in `ablate`, counting up from `seed`.
    pub ablation_seeds: usize,
    /// Off by default so that run.csv is reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let est = EstimatorConfig::default();
        Self {
            task: "disc2d".to_string(),
            estimator_kind: est.estimator_kind,
            sampling_mode: est.sampling_mode,
            antithetic: est.antithetic,
            normalization: est.normalization,
            sample_count: est.sample_count,
            iters: 300,
            lr: DEFAULT_LR,
            sigma0: 0.5,
            sigma_min: 0.01,
            schedule: ScheduleKind::Linear,
            seed: 0,
            output_dir: PathBuf::from("out"),
            step: est.step,
            pixel_noise: 0.0,
            theta0: None,
            ablation_seeds: 5,
            record_wall_time: false,
        }
    }
}

/// Everything needed to call the optimizer.
pub struct Resolved {
    pub task: Box<dyn Task>,
    pub estimator: EstimatorConfig,
    pub schedule: BandwidthSchedule,
    pub theta0: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let field = unknown_field(&e.to_string()).unwrap_or_else(|| "<json>".to_string());
            Error::config(&field, e.to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            sample_count: self.sample_count,
            sampling_mode: self.sampling_mode,
            antithetic: self.antithetic,
            normalization: self.normalization,
            estimator_kind: self.estimator_kind,
            step: self.step,
        }
    }

    fn check_scalars(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite and > 0, got {v}")))
            }
        };
        if self.iters == 0 {
            return Err(Error::config("iters", "must be >= 1"));
        }
        positive("lr", self.lr)?;
        positive("sigma0", self.sigma0)?;
        positive("sigma_min", self.sigma_min)?;
        if self.sigma_min > self.sigma0 {
            return Err(Error::config("sigma_min", "must not exceed sigma0"));
        }
        positive("step", self.step)?;
        if !(self.pixel_noise.is_finite() && self.pixel_noise >= 0.0) {
            return Err(Error::config("pixel_noise", "must be finite and >= 0"));
        }
        if self.ablation_seeds == 0 {
            return Err(Error::config("ablation_seeds", "must be >= 1"));
        }
        self.estimator()
            .validate()
            .map_err(|e| Error::config("sample_count", e.to_string()))
    }

    /// Validates every field and builds the task, estimator and schedule.
    pub fn resolve(&self) -> Result<Resolved> {
        self.check_scalars()?;
        let noise = (self.pixel_noise > 0.0).then_some(PixelNoise {
            std: self.pixel_noise,
            seed: self.seed,
        });
        let task = tasks::by_name(&self.task, noise)?;
        let info = task.info();
        let estimator = self.estimator();
        match estimator.estimator_kind {
            EstimatorKind::Reparam | EstimatorKind::Hard if !task.has_gradient() => {
                return Err(Error::UnsupportedEstimator {
                    estimator: estimator.estimator_kind.as_str().to_string(),
                    task: self.task.clone(),
                })
            }
            _ => {}
        }
        let extent = info.extent();
        let schedule = BandwidthSchedule::new(
            extent.iter().map(|e| e * self.sigma0).collect(),
            extent.iter().map(|e| e * self.sigma_min).collect(),
            self.schedule,
        )?;
        let theta0 = match &self.theta0 {
            Some(t) if t.len() != info.dim() => {
                return Err(Error::config(
                    "theta0",
                    format!("has {} components, task `{}` expects {}", t.len(), self.task, info.dim()),
                ))
            }
            Some(t) if !info.contains(t) => {
                return Err(Error::config("theta0", "lies outside the task domain"));
            }
            Some(t) => t.clone(),
            None => task.initial_theta(self.seed),
        };
        Ok(Resolved {
            task,
            estimator,
            schedule,
            theta0,
        })
    }
}

fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}
