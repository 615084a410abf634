//! Commands behind the `prd` binary. Each returns a summary on success so
//! tests can drive them in-process.

mod args;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ExperimentConfig, Resolved};
use crate::error::Error;
use crate::estimator::estimate_gradient_score;
use crate::kernel::{rayleigh_cdf, sample_offsets, SamplingMode, SmoothingKernel};
use crate::optimizer::{run_optimization_from, RunRecord};
use crate::oracle::{convolve, QuadratureGrid};
use crate::schedule::ScheduleKind;
use crate::tasks::{self, write_atomic, Task};

pub use args::{main_with_args, Cli, Command, ConfigOverrides};

/// Below this many draws the KS threshold is reported but not enforced.
pub const KS_ENFORCE_MIN_COUNT: usize = 10_000;
pub const KS_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[source] Error),
    #[error("runtime error: {0}")]
    Runtime(#[source] Error),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

/// Errors that stem from bad input are config errors; the rest are runtime.
fn classify(e: Error) -> CliError {
    match e {
        Error::Config { .. }
        | Error::UnknownTask(_)
        | Error::UnsupportedEstimator { .. }
        | Error::InvalidBandwidth { .. }
        | Error::BandwidthOutOfRange { .. }
        | Error::InvalidCount { .. }
        | Error::InvalidStep(_)
        | Error::DimensionMismatch { .. } => CliError::Config(e),
        other => CliError::Runtime(other),
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Config(Error::config(
            "output_dir",
            format!("cannot create {}: {e}", dir.display()),
        ))
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(CliError::Runtime)
}

/// One CSV row per iteration; reals use shortest round-trip formatting.
pub fn run_csv(record: &RunRecord, dim: usize, with_wall_time: bool) -> String {
    let mut out = String::from("iteration");
    for i in 0..dim {
        write!(out, ",theta_{i}").unwrap();
    }
    out.push_str(",image_mse,param_mse");
    for i in 0..dim {
        write!(out, ",sigma_{i}").unwrap();
    }
    out.push_str(",n_evals_cumulative,wall_time_seconds\n");
    for e in &record.entries {
        write!(out, "{}", e.iteration).unwrap();
        for t in &e.theta {
            write!(out, ",{t:?}").unwrap();
        }
        write!(out, ",{:?},{:?}", e.image_mse, e.param_mse).unwrap();
        for s in &e.sigma {
            write!(out, ",{s:?}").unwrap();
        }
        let wall = if with_wall_time { e.wall_time } else { 0.0 };
        writeln!(out, ",{},{wall:?}", e.n_evals).unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub record: RunRecord,
    pub initial_param_mse: f64,
    pub initial_image_mse: f64,
}

impl RunSummary {
    pub fn final_param_mse(&self) -> f64 {
        self.record.entries.last().map_or(self.initial_param_mse, |e| e.param_mse)
    }

    pub fn final_image_mse(&self) -> f64 {
        self.record.entries.last().map_or(self.initial_image_mse, |e| e.image_mse)
    }
}

fn write_image(task: &dyn Task, theta: &[f64], path: &Path) -> Result<(), CliError> {
    if let Some(img) = task.render(theta) {
        img.write_ppm(path).map_err(CliError::Runtime)?;
    }
    Ok(())
}

/// Runs one optimization and writes run.csv, the three PPM snapshots and the
/// resolved config into `config.output_dir`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let resolved = config.resolve().map_err(classify)?;
    run_resolved(config, &resolved, &config.output_dir)
}

fn run_resolved(config: &ExperimentConfig, r: &Resolved, dir: &Path) -> Result<RunSummary, CliError> {
    prepare_dir(dir)?;
    let task = r.task.as_ref();
    let mut echoed = config.clone();
    echoed.output_dir = dir.to_path_buf();
    echoed.theta0 = Some(r.theta0.clone());
    write_text(&dir.join("config.json"), &echoed.to_json())?;

    let initial = tasks::evaluate_loss(task, &r.theta0).map_err(CliError::Runtime)?;
    if let Some(reference) = task.reference_image() {
        reference.write_ppm(&dir.join("reference.ppm")).map_err(CliError::Runtime)?;
    }
    write_image(task, &r.theta0, &dir.join("initial.ppm"))?;

    let outcome = run_optimization_from(
        task,
        &r.theta0,
        &r.estimator,
        &r.schedule,
        config.iters,
        config.lr,
        config.seed,
    );
    let (record, failure) = match outcome {
        Ok(rec) => (rec, None),
        Err(e) => (e.partial, Some(e.source)),
    };
    let dim = task.info().dim();
    write_text(&dir.join("run.csv"), &run_csv(&record, dim, config.record_wall_time))?;
    if let Some(source) = failure {
        return Err(CliError::Runtime(source));
    }
    write_image(task, record.final_theta(), &dir.join("final.ppm"))?;
    Ok(RunSummary {
        output_dir: dir.to_path_buf(),
        record,
        initial_param_mse: initial.param_mse,
        initial_image_mse: initial.image_mse,
    })
}

pub const ABLATION_VARIANTS: [&str; 4] = ["base", "noIS", "noAP", "noAT"];

/// Single-switch variants of `base`: uniform sampling, a constant
/// bandwidth, and independent (non-paired) samples.
pub fn ablation_variant(base: &ExperimentConfig, name: &str) -> Option<ExperimentConfig> {
    let mut cfg = base.clone();
    match name {
        "base" => {}
        "noIS" => cfg.sampling_mode = SamplingMode::Uniform,
        "noAP" => cfg.schedule = ScheduleKind::Constant,
        "noAT" => cfg.antithetic = false,
        _ => return None,
    }
    Some(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub image_median: f64,
    pub param_median: f64,
    /// Variant median over base median.
    pub image_ratio: f64,
    pub param_ratio: f64,
    pub param_finals: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ratio(value: f64, base: f64) -> f64 {
    if value == base {
        1.0
    } else {
        value / base
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,img_median,para_median,img_ratio,para_ratio\n");
    for r in rows {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            r.variant, r.image_median, r.param_median, r.image_ratio, r.param_ratio
        )
        .unwrap();
    }
    out
}

/// Runs the base config and the three ablations over `ablation_seeds`
/// shared seeds. Each run writes into `<output_dir>/<variant>/seed_<k>`; the
/// medians go to `<output_dir>/ablation.csv`.
pub fn cmd_ablate(config: &ExperimentConfig) -> Result<Vec<AblationRow>, CliError> {
    let variants: Vec<ExperimentConfig> = ABLATION_VARIANTS
        .iter()
        .map(|v| ablation_variant(config, v).expect("known variant"))
        .collect();
    for v in &variants {
        v.resolve().map_err(classify)?;
    }
    prepare_dir(&config.output_dir)?;
    let jobs: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| (0..config.ablation_seeds as u64).map(move |k| (v, config.seed + k)))
        .collect();
    let results: Vec<Result<RunSummary, CliError>> = jobs
        .par_iter()
        .map(|&(v, seed)| {
            let cfg = ExperimentConfig {
                seed,
                ..variants[v].clone()
            };
            let dir = config
                .output_dir
                .join(ABLATION_VARIANTS[v])
                .join(format!("seed_{seed}"));
            let resolved = cfg.resolve().map_err(classify)?;
            run_resolved(&cfg, &resolved, &dir)
        })
        .collect();
    let mut finals = vec![(Vec::new(), Vec::new()); variants.len()];
    for ((v, _), r) in jobs.iter().zip(results) {
        let s = r?;
        finals[*v].0.push(s.final_image_mse());
        finals[*v].1.push(s.final_param_mse());
    }
    let base_img = median(&finals[0].0);
    let base_par = median(&finals[0].1);
    let rows: Vec<AblationRow> = ABLATION_VARIANTS
        .iter()
        .zip(&finals)
        .map(|(name, (img, par))| {
            let (mi, mp) = (median(img), median(par));
            AblationRow {
                variant: name.to_string(),
                image_median: mi,
                param_median: mp,
                image_ratio: ratio(mi, base_img),
                param_ratio: ratio(mp, base_par),
                param_finals: par.clone(),
            }
        })
        .collect();
    write_text(&config.output_dir.join("ablation.csv"), &ablation_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCheck {
    pub ks: f64,
    pub count: usize,
    pub enforced: bool,
}

impl SampleCheck {
    pub fn passed(&self) -> bool {
        !self.enforced || self.ks < KS_THRESHOLD
    }
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

const HISTOGRAM_BINS: usize = 50;
const HISTOGRAM_RANGE_SIGMAS: f64 = 5.0;

/// Draws `count` importance offsets at bandwidth `sigma` and compares their
/// magnitudes with the Rayleigh CDF. Writes `histogram.csv` and `ks.txt`.
pub fn cmd_sample_check(sigma: f64, count: usize, seed: u64, output_dir: &Path) -> Result<SampleCheck, CliError> {
    let kernel = SmoothingKernel::fixed(vec![sigma]).map_err(classify)?;
    let offsets = sample_offsets(&kernel, count, SamplingMode::Importance, false, seed).map_err(classify)?;
    let radii: Vec<f64> = offsets.iter().map(|o| o.tau[0].abs()).collect();
    let ks = ks_statistic(&radii, |r| rayleigh_cdf(r, sigma));

    let width = HISTOGRAM_RANGE_SIGMAS * sigma / HISTOGRAM_BINS as f64;
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for r in &radii {
        let b = (r / width) as usize;
        if b < HISTOGRAM_BINS {
            counts[b] += 1;
        }
    }
    let mut csv = String::from("bin_lo,bin_hi,count,expected\n");
    for (b, c) in counts.iter().enumerate() {
        let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
        let expected = count as f64 * (rayleigh_cdf(hi, sigma) - rayleigh_cdf(lo, sigma));
        writeln!(csv, "{lo:?},{hi:?},{c},{expected:?}").unwrap();
    }
    prepare_dir(output_dir)?;
    write_text(&output_dir.join("histogram.csv"), &csv)?;
    let check = SampleCheck {
        ks,
        count,
        enforced: count >= KS_ENFORCE_MIN_COUNT,
    };
    let verdict = match (check.enforced, check.passed()) {
        (false, _) => "not_enforced",
        (true, true) => "pass",
        (true, false) => "fail",
    };
    write_text(
        &output_dir.join("ks.txt"),
        &format!("sigma={sigma:?}\ncount={count}\nks={ks:?}\nverdict={verdict}\n"),
    )?;
    Ok(check)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub estimate: f64,
    pub standard_error: f64,
    pub oracle: f64,
    pub pass: bool,
}

/// Summation round-off in the quadrature; a zero-variance estimate of a
/// zero gradient would otherwise fail against an oracle of 1e-17.
const ORACLE_ROUNDOFF: f64 = 1e-12;

/// Mean of independent estimates within `z` standard errors of `oracle`.
pub fn within_standard_errors(mean: f64, se: f64, oracle: f64, z: f64) -> bool {
    (mean - oracle).abs() <= z * se + ORACLE_ROUNDOFF * (1.0 + oracle.abs())
}

/// `trials` independent score estimates at `theta` against the
/// quadrature gradient. `sigma` is in parameter units.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    task: &dyn Task,
    theta: &[f64],
    sigma: f64,
    sample_count: usize,
    trials: usize,
    seed: u64,
    estimator: &crate::estimator::EstimatorConfig,
) -> Result<Vec<GradCheckRow>, CliError> {
    let dim = task.info().dim();
    if theta.len() != dim {
        return Err(CliError::Config(Error::config(
            "theta",
            format!("has {} components, task expects {dim}", theta.len()),
        )));
    }
    if trials < 2 {
        return Err(CliError::Config(Error::config("trials", "must be >= 2")));
    }
    let grid = match dim {
        1 => QuadratureGrid::dense_1d(),
        2 => QuadratureGrid::for_dim(2, 1_000_000),
        3 => QuadratureGrid::for_dim(3, 8_000_000),
        _ => {
            return Err(CliError::Config(Error::config(
                "task",
                "quadrature oracle supports at most 3 dimensions",
            )))
        }
    };
    let kernel = SmoothingKernel::fixed(vec![sigma; dim]).map_err(classify)?;
    let cfg = crate::estimator::EstimatorConfig {
        sample_count,
        ..estimator.clone()
    };
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for _ in 0..trials {
        let est = estimate_gradient_score(task, theta, &kernel, &cfg, master.next_u64()).map_err(classify)?;
        for j in 0..dim {
            sums[j] += est.grad[j];
            sq[j] += est.grad[j] * est.grad[j];
        }
    }
    let oracle = convolve(task, theta, &vec![sigma; dim], grid).map_err(classify)?;
    let n = trials as f64;
    Ok((0..dim)
        .map(|j| {
            let mean = sums[j] / n;
            let var = ((sq[j] - n * mean * mean) / (n - 1.0)).max(0.0);
            let se = (var / n).sqrt();
            GradCheckRow {
                estimate: mean,
                standard_error: se,
                oracle: oracle.grad[j],
                pass: within_standard_errors(mean, se, oracle.grad[j], 3.0),
            }
        })
        .collect())
}

/// [`grad_check`] on a registered task; writes `grad_check.csv`. Any failing
/// component is a check failure.
pub fn cmd_grad_check(
    task_name: &str,
    theta: &[f64],
    sigma: f64,
    sample_count: usize,
    trials: usize,
    seed: u64,
    output_dir: &Path,
) -> Result<Vec<GradCheckRow>, CliError> {
    let task = tasks::by_name(task_name, None).map_err(classify)?;
    let rows = grad_check(
        task.as_ref(),
        theta,
        sigma,
        sample_count,
        trials,
        seed,
        &crate::estimator::EstimatorConfig::default(),
    )?;
    let mut csv = String::from("component,estimate,standard_error,oracle,pass\n");
    for (j, r) in rows.iter().enumerate() {
        writeln!(csv, "{j},{:?},{:?},{:?},{}", r.estimate, r.standard_error, r.oracle, r.pass).unwrap();
    }
    prepare_dir(output_dir)?;
    write_text(&output_dir.join("grad_check.csv"), &csv)?;
    if let Some(j) = rows.iter().position(|r| !r.pass) {
        return Err(CliError::Check(format!(
            "component {j}: estimate {} vs oracle {} (se {})",
            rows[j].estimate, rows[j].oracle, rows[j].standard_error
        )));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::RunEntry;

    #[test]
    fn csv_header_and_precision() {
        let rec = RunRecord {
            initial_theta: vec![0.0, 0.0],
            entries: vec![RunEntry {
                iteration: 1,
                theta: vec![0.1, 1.0 / 3.0],
                image_mse: 0.25,
                param_mse: 1e-17,
                sigma: vec![0.5, 0.5],
                n_evals: 2,
                wall_time: 0.123,
                clamped: false,
            }],
        };
        let csv = run_csv(&rec, 2, false);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,theta_0,theta_1,image_mse,param_mse,sigma_0,sigma_1,n_evals_cumulative,wall_time_seconds"
        );
        let row = lines.next().unwrap();
        assert_eq!(row, "1,0.1,0.3333333333333333,0.25,1e-17,0.5,0.5,2,0.0");
        let back: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
        assert!(run_csv(&rec, 2, true).contains(",2,0.123\n"));
    }

    #[test]
    fn median_and_ratio() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(ratio(0.0, 0.0), 1.0);
        assert_eq!(ratio(2e-5, 2e-5), 1.0);
        assert_eq!(ratio(4.0, 2.0), 2.0);
    }

    #[test]
    fn ablation_variants_flip_one_switch() {
        let base = ExperimentConfig::default();
        assert_eq!(ablation_variant(&base, "base").unwrap(), base);
        assert_eq!(ablation_variant(&base, "noIS").unwrap().sampling_mode, SamplingMode::Uniform);
        assert_eq!(ablation_variant(&base, "noAP").unwrap().schedule, ScheduleKind::Constant);
        assert!(!ablation_variant(&base, "noAT").unwrap().antithetic);
        assert!(ablation_variant(&base, "noXY").is_none());
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let ks = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((ks - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn grad_check_constant_is_exact() {
        let task = tasks::ConstantTask::new(1, 0.5);
        let rows = grad_check(&task, &[0.3], 0.4, 10, 5, 0, &Default::default()).unwrap();
        assert_eq!(rows[0].estimate, 0.0);
        assert_eq!(rows[0].standard_error, 0.0);
        assert!(rows[0].oracle.abs() < 1e-15);
        assert!(rows[0].pass);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(Error::UnknownTask("x".into())).exit_code(), 1);
        assert_eq!(CliError::Runtime(Error::InvalidUniform(2.0)).exit_code(), 2);
        assert_eq!(CliError::Check("x".into()).exit_code(), 3);
        assert_eq!(classify(Error::UnknownTask("x".into())).exit_code(), 1);
    }
}
