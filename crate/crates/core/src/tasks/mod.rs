//! Black-box objectives: hard-visibility 2D inverse-rendering scenes and
//! small analytic functions used as estimator oracles.

mod analytic;
mod image;
mod scenes;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use analytic::{ConstantTask, QuadraticTask, SigmoidStepTask, StepPlateauTask};
pub use image::{image_mse, quantize, Image};
pub(crate) use image::write_atomic;
pub use scenes::{Disc, Disc2dScene, Viewport, OcclusionScene, Scene, ShadowScene, SortScene, DEFAULT_RESOLUTION};

use crate::error::{Error, Result, TaskError};

/// Static description of a task: name, box domain and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInfo {
    pub name: String,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub theta_ref: Vec<f64>,
}

impl TaskInfo {
    pub fn new(name: &str, domain_lo: Vec<f64>, domain_hi: Vec<f64>, theta_ref: Vec<f64>) -> Self {
        assert_eq!(domain_lo.len(), domain_hi.len());
        assert_eq!(domain_lo.len(), theta_ref.len());
        assert!(domain_lo.iter().zip(&domain_hi).all(|(lo, hi)| lo < hi));
        Self {
            name: name.to_string(),
            domain_lo,
            domain_hi,
            theta_ref,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta_ref.len()
    }

    pub fn extent(&self) -> Vec<f64> {
        self.domain_lo.iter().zip(&self.domain_hi).map(|(lo, hi)| hi - lo).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(self.domain_lo.iter().zip(&self.domain_hi))
            .all(|(t, (lo, hi))| (lo..=hi).contains(&t))
    }

    /// Clamps `theta` into the domain; returns whether anything moved.
    pub fn clamp(&self, theta: &mut [f64]) -> bool {
        let mut moved = false;
        for (t, (lo, hi)) in theta.iter_mut().zip(self.domain_lo.iter().zip(&self.domain_hi)) {
            let c = t.clamp(*lo, *hi);
            if c != *t {
                *t = c;
                moved = true;
            }
        }
        moved
    }

    pub(crate) fn check(&self, theta: &[f64]) -> Result<(), TaskError> {
        if theta.len() != self.dim() {
            return Err(TaskError::Dimension {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        match theta.iter().position(|t| !t.is_finite()) {
            Some(index) => Err(TaskError::NonFinite {
                index,
                value: theta[index],
            }),
            None => Ok(()),
        }
    }
}

/// A scalar objective over parameter space. Image tasks compare a render
/// against their reference; analytic tasks evaluate a closed form.
pub trait Task: Send + Sync {
    fn info(&self) -> &TaskInfo;

    fn loss(&self, theta: &[f64]) -> Result<f64, TaskError>;

    fn has_gradient(&self) -> bool {
        false
    }

    fn loss_gradient(&self, _theta: &[f64]) -> Result<Vec<f64>, TaskError> {
        Err(TaskError::Other(format!("task `{}` has no analytic gradient", self.info().name)))
    }

    /// Noise-free render, for image tasks.
    fn render(&self, _theta: &[f64]) -> Option<Image> {
        None
    }

    fn reference_image(&self) -> Option<&Image> {
        None
    }

    /// Tasks that cannot be evaluated from several threads at once.
    fn serial_only(&self) -> bool {
        false
    }

    /// Starting point of an optimization run.
    fn initial_theta(&self, seed: u64) -> Vec<f64>;

    /// A stored configuration on a plateau of the raw loss, if any.
    fn plateau_theta(&self) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub image_mse: f64,
    pub param_mse: f64,
}

/// Image- and parameter-space error at `theta`. `param_mse` is a diagnostic
/// against the ground truth and is never handed to the optimizer.
pub fn evaluate_loss(task: &dyn Task, theta: &[f64]) -> Result<LossReport> {
    let image_mse = task.loss(theta).map_err(|e| Error::task(None, e))?;
    Ok(LossReport {
        image_mse,
        param_mse: param_mse(theta, &task.info().theta_ref)?,
    })
}

/// Image MSE of an image task's clean render against an explicit reference.
pub fn evaluate_loss_against(task: &dyn Task, theta: &[f64], reference: &Image) -> Result<LossReport> {
    task.info().check(theta).map_err(|e| Error::task(None, e))?;
    let img = task
        .render(theta)
        .ok_or_else(|| Error::UnsupportedEstimator {
            estimator: "render".into(),
            task: task.info().name.clone(),
        })?;
    Ok(LossReport {
        image_mse: image_mse(&img, reference)?,
        param_mse: param_mse(theta, &task.info().theta_ref)?,
    })
}

pub fn param_mse(theta: &[f64], theta_ref: &[f64]) -> Result<f64> {
    if theta.len() != theta_ref.len() {
        return Err(Error::DimensionMismatch {
            expected: theta_ref.len(),
            found: theta.len(),
        });
    }
    let sum: f64 = theta.iter().zip(theta_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / theta.len() as f64)
}

/// Additive Gaussian pixel noise standing in for a Monte Carlo render.
/// The noise stream is a pure function of `(seed, theta)`, so repeated
/// evaluations at the same point agree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelNoise {
    pub std: f64,
    pub seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl PixelNoise {
    fn apply(&self, img: &mut Image, theta: &[f64]) {
        let mut h = splitmix(self.seed);
        for t in theta {
            h = splitmix(h ^ t.to_bits());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        for v in img.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = (*v + self.std * z).clamp(0.0, 1.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Init {
    Fixed(Vec<f64>),
    /// Uniform in `[lo, hi]` per component, drawn from the seed.
    Random { lo: f64, hi: f64 },
}

/// Couples a [`Scene`] with its reference render; loss is image MSE.
pub struct ImageTask<S: Scene> {
    info: TaskInfo,
    scene: S,
    reference: Image,
    init: Init,
    plateau: Option<Vec<f64>>,
    noise: Option<PixelNoise>,
}

impl<S: Scene> ImageTask<S> {
    fn new(info: TaskInfo, scene: S, init: Init, plateau: Option<Vec<f64>>) -> Self {
        assert_eq!(scene.dim(), info.dim());
        let reference = scene.render(&info.theta_ref);
        Self {
            info,
            scene,
            reference,
            init,
            plateau,
            noise: None,
        }
    }

    pub fn with_noise(mut self, noise: Option<PixelNoise>) -> Self {
        self.noise = noise.filter(|n| n.std > 0.0);
        self
    }

    pub fn scene(&self) -> &S {
        &self.scene
    }
}

impl<S: Scene> Task for ImageTask<S> {
    fn info(&self) -> &TaskInfo {
        &self.info
    }

    fn loss(&self, theta: &[f64]) -> Result<f64, TaskError> {
        self.info.check(theta)?;
        let mut img = self.scene.render(theta);
        if let Some(noise) = &self.noise {
            noise.apply(&mut img, theta);
        }
        image_mse(&img, &self.reference).map_err(|e| TaskError::Other(e.to_string()))
    }

    fn render(&self, theta: &[f64]) -> Option<Image> {
        self.info.check(theta).ok()?;
        Some(self.scene.render(theta))
    }

    fn reference_image(&self) -> Option<&Image> {
        Some(&self.reference)
    }

    fn initial_theta(&self, seed: u64) -> Vec<f64> {
        match &self.init {
            Init::Fixed(v) => v.clone(),
            Init::Random { lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..self.info.dim()).map(|_| rng.random_range(*lo..*hi)).collect()
            }
        }
    }

    fn plateau_theta(&self) -> Option<Vec<f64>> {
        self.plateau.clone()
    }
}

/// Disc position in the unit square; the reference sits at a pixel corner.
pub fn disc2d() -> ImageTask<Disc2dScene> {
    let plateau = vec![9.0 / 64.0, 9.0 / 64.0];
    ImageTask::new(
        TaskInfo::new("disc2d", vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.5]),
        Disc2dScene::default(),
        Init::Fixed(plateau.clone()),
        Some(plateau),
    )
}

/// Movable disc starting hidden behind the occluder.
pub fn occlusion() -> ImageTask<OcclusionScene> {
    let hidden = vec![0.5, 0.5, 0.9];
    ImageTask::new(
        TaskInfo::new("occlusion", vec![0.0; 3], vec![1.0; 3], vec![0.3125, 0.6875, 0.1]),
        OcclusionScene::default(),
        Init::Fixed(hidden.clone()),
        Some(hidden),
    )
}

/// Light position of an off-screen shadow caster. The run starts with
/// the shadow disjoint from the reference shadow.
pub fn shadow() -> ImageTask<ShadowScene> {
    let disjoint = vec![0.865, 4.385];
    ImageTask::new(
        TaskInfo::new("shadow", vec![0.0, 3.5], vec![1.0, 4.5], vec![0.5, 4.0]),
        ShadowScene::default(),
        Init::Fixed(disjoint.clone()),
        Some(disjoint),
    )
}

/// Eight discs on a 4x2 grid; the run starts from a seeded random layout.
pub fn sort() -> ImageTask<SortScene> {
    let xs = [6.0 / 32.0, 13.0 / 32.0, 19.0 / 32.0, 26.0 / 32.0];
    let rows = [10.0 / 32.0, 22.0 / 32.0];
    let plateau_rows = [29.0 / 32.0, 3.0 / 32.0];
    let mut theta_ref = Vec::with_capacity(16);
    let mut plateau = Vec::with_capacity(16);
    for (row, plateau_row) in rows.iter().zip(plateau_rows) {
        for (i, x) in xs.iter().enumerate() {
            theta_ref.extend_from_slice(&[*x, *row]);
            plateau.extend_from_slice(&[xs[3 - i], plateau_row]);
        }
    }
    ImageTask::new(
        TaskInfo::new("sort", vec![0.0; 16], vec![1.0; 16], theta_ref),
        SortScene::new(8),
        Init::Random { lo: 0.1, hi: 0.9 },
        Some(plateau),
    )
}

/// Names accepted by [`by_name`].
pub const TASK_NAMES: &[&str] = &[
    "disc2d",
    "occlusion",
    "shadow",
    "sort",
    "step",
    "quadratic",
    "quadratic2d",
    "sigmoid",
    "constant",
];

/// Builds a registered task. `noise` only affects image tasks.
pub fn by_name(name: &str, noise: Option<PixelNoise>) -> Result<Box<dyn Task>> {
    Ok(match name {
        "disc2d" => Box::new(disc2d().with_noise(noise)),
        "occlusion" => Box::new(occlusion().with_noise(noise)),
        "shadow" => Box::new(shadow().with_noise(noise)),
        "sort" => Box::new(sort().with_noise(noise)),
        "step" => Box::new(StepPlateauTask::default()),
        "quadratic" => Box::new(QuadraticTask::new(1)),
        "quadratic2d" => Box::new(QuadraticTask::new(2)),
        "sigmoid" => Box::new(SigmoidStepTask::default()),
        "constant" => Box::new(ConstantTask::new(1, 0.5)),
        other => return Err(Error::UnknownTask(other.to_string())),
    })
}

/// The closed-form test objectives.
pub fn analytic_tasks() -> Vec<Box<dyn Task>> {
    vec![
        Box::new(StepPlateauTask::default()),
        Box::new(QuadraticTask::new(1)),
        Box::new(QuadraticTask::new(2)),
        Box::new(SigmoidStepTask::default()),
        Box::new(ConstantTask::new(1, 0.5)),
    ]
}
