use prd_core::estimator::{estimate_gradient_score, EstimatorConfig};
use prd_core::kernel::{SamplingMode, SmoothingKernel};
use prd_core::optimizer::run_optimization;
use prd_core::schedule::{BandwidthSchedule, ScheduleKind};
use prd_core::tasks::{self, Task};

#[test]
fn parallel_estimates_repeat_exactly() {
    // 256 evaluations go through the thread pool.
    let task = tasks::occlusion();
    let theta = task.plateau_theta().unwrap();
    let kernel = SmoothingKernel::fixed(vec![0.3; 3]).unwrap();
    for mode in [SamplingMode::Importance, SamplingMode::Gaussian, SamplingMode::Uniform] {
        let cfg = EstimatorConfig {
            sampling_mode: mode,
            ..EstimatorConfig::score(256)
        };
        let a = estimate_gradient_score(&task, &theta, &kernel, &cfg, 5).unwrap();
        let b = estimate_gradient_score(&task, &theta, &kernel, &cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = estimate_gradient_score(&task, &theta, &kernel, &cfg, 6).unwrap();
        assert_ne!(a.grad, c.grad);
    }
}

#[test]
fn runs_repeat_per_seed() {
    let task = tasks::sort();
    let info = task.info();
    let sigma0: Vec<f64> = info.extent().iter().map(|e| 0.3 * e).collect();
    let sigma_min: Vec<f64> = info.extent().iter().map(|e| 0.02 * e).collect();
    let schedule = BandwidthSchedule::new(sigma0, sigma_min, ScheduleKind::Linear).unwrap();
    let cfg = EstimatorConfig::score(4);
    let a = run_optimization(&task, &cfg, &schedule, 10, 0.01, 3).unwrap();
    let b = run_optimization(&task, &cfg, &schedule, 10, 0.01, 3).unwrap();
    let c = run_optimization(&task, &cfg, &schedule, 10, 0.01, 4).unwrap();
    assert!(a.same_trajectory(&b));
    assert_ne!(a.initial_theta, c.initial_theta);
}
