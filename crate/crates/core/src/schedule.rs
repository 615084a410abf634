//! Bandwidth decay over an optimization run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::check_bandwidth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `sigma0 - progress * (sigma0 - sigma_min)`.
    Linear,
    /// Always `sigma0`. Disables adaptive perturbations.
    Constant,
}

impl std::str::FromStr for ScheduleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "constant" => Ok(ScheduleKind::Constant),
            other => Err(format!("unknown schedule `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSchedule {
    sigma0: Vec<f64>,
    sigma_min: Vec<f64>,
    kind: ScheduleKind,
}

/// Result of [`BandwidthSchedule::bandwidth_at`]; `clamped` is set when the
/// requested progress fell outside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    pub sigma: Vec<f64>,
    pub clamped: bool,
}

impl BandwidthSchedule {
    pub fn new(sigma0: Vec<f64>, sigma_min: Vec<f64>, kind: ScheduleKind) -> Result<Self> {
        if sigma0.len() != sigma_min.len() {
            return Err(Error::DimensionMismatch {
                expected: sigma0.len(),
                found: sigma_min.len(),
            });
        }
        check_bandwidth(&sigma0)?;
        check_bandwidth(&sigma_min)?;
        if let Some(index) = sigma0.iter().zip(&sigma_min).position(|(s0, sm)| sm > s0) {
            return Err(Error::BandwidthOutOfRange {
                index,
                value: sigma_min[index],
                min: 0.0,
                max: sigma0[index],
            });
        }
        Ok(Self {
            sigma0,
            sigma_min,
            kind,
        })
    }

    pub fn sigma0(&self) -> &[f64] {
        &self.sigma0
    }

    pub fn sigma_min(&self) -> &[f64] {
        &self.sigma_min
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn bandwidth_at(&self, progress: f64) -> Bandwidth {
        let clamped = !(0.0..=1.0).contains(&progress);
        let p = if progress.is_nan() { 0.0 } else { progress.clamp(0.0, 1.0) };
        let sigma = match self.kind {
            ScheduleKind::Constant => self.sigma0.clone(),
            ScheduleKind::Linear => self
                .sigma0
                .iter()
                .zip(&self.sigma_min)
                .map(|(&s0, &sm)| {
                    if p == 1.0 {
                        sm
                    } else {
                        (s0 - p * (s0 - sm)).clamp(sm, s0)
                    }
                })
                .collect(),
        };
        Bandwidth { sigma, clamped }
    }
}
