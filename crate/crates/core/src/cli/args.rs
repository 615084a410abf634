use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use super::{cmd_ablate, cmd_grad_check, cmd_run, cmd_sample_check, CliError};
use crate::config::ExperimentConfig;
use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "prd", version, about = "Smoothed black-box gradient descent on toy inverse-rendering tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one task and log the trajectory.
    Run(ConfigOverrides),
    /// Base config plus the noIS/noAP/noAT ablations over shared seeds.
    Ablate(ConfigOverrides),
    /// KS test of the importance sampler against its target CDF.
    SampleCheck {
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "PRD_OUT", default_value = "out")]
        output_dir: PathBuf,
    },
    /// Mean score estimate against the quadrature gradient.
    GradCheck {
        #[arg(long)]
        task: String,
        /// Comma-separated parameter vector.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
        /// Kernel bandwidth in parameter units.
        #[arg(long)]
        sigma: f64,
        #[arg(long = "sample-count", default_value_t = 1000)]
        sample_count: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "PRD_OUT", default_value = "out")]
        output_dir: PathBuf,
    },
}

/// Flags mirror the config fields; any flag given overrides the file.
#[derive(Debug, Default, Clone, Args)]
pub struct ConfigOverrides {
    /// JSON config file; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub estimator_kind: Option<String>,
    #[arg(long)]
    pub sampling_mode: Option<String>,
    #[arg(long)]
    pub antithetic: Option<bool>,
    #[arg(long)]
    pub normalization: Option<String>,
    #[arg(long)]
    pub sample_count: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "PRD_OUT")]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub pixel_noise: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
    #[arg(long)]
    pub ablation_seeds: Option<usize>,
    #[arg(long)]
    pub record_wall_time: Option<bool>,
}

fn parse_field<T: FromStr<Err = String>>(field: &str, value: &Option<String>, slot: &mut T) -> Result<(), Error> {
    if let Some(v) = value {
        *slot = v.parse().map_err(|e: String| Error::config(field, e))?;
    }
    Ok(())
}

fn set<T: Clone>(value: &Option<T>, slot: &mut T) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl ConfigOverrides {
    /// Loads the file (if any) and applies every flag on top.
    pub fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        set(&self.task, &mut cfg.task);
        parse_field("estimator_kind", &self.estimator_kind, &mut cfg.estimator_kind)?;
        parse_field("sampling_mode", &self.sampling_mode, &mut cfg.sampling_mode)?;
        set(&self.antithetic, &mut cfg.antithetic);
        parse_field("normalization", &self.normalization, &mut cfg.normalization)?;
        set(&self.sample_count, &mut cfg.sample_count);
        set(&self.iters, &mut cfg.iters);
        set(&self.lr, &mut cfg.lr);
        set(&self.sigma0, &mut cfg.sigma0);
        set(&self.sigma_min, &mut cfg.sigma_min);
        parse_field("schedule", &self.schedule, &mut cfg.schedule)?;
        set(&self.seed, &mut cfg.seed);
        set(&self.output_dir, &mut cfg.output_dir);
        set(&self.step, &mut cfg.step);
        set(&self.pixel_noise, &mut cfg.pixel_noise);
        if let Some(t) = &self.theta0 {
            cfg.theta0 = Some(t.clone());
        }
        set(&self.ablation_seeds, &mut cfg.ablation_seeds);
        set(&self.record_wall_time, &mut cfg.record_wall_time);
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(o) => {
            let cfg = o.resolve().map_err(CliError::Config)?;
            let s = cmd_run(&cfg)?;
            println!(
                "{}: {} iterations, param_mse {:e} -> {:e}, image_mse {:e} -> {:e}, {} evaluations",
                cfg.task,
                s.record.entries.len(),
                s.initial_param_mse,
                s.final_param_mse(),
                s.initial_image_mse,
                s.final_image_mse(),
                s.record.total_evals()
            );
            println!("wrote {}", s.output_dir.display());
        }
        Command::Ablate(o) => {
            let cfg = o.resolve().map_err(CliError::Config)?;
            let rows = cmd_ablate(&cfg)?;
            print!("{}", super::ablation_csv(&rows));
        }
        Command::SampleCheck {
            sigma,
            count,
            seed,
            output_dir,
        } => {
            let c = cmd_sample_check(sigma, count, seed, &output_dir)?;
            println!("ks {:.6} over {} draws{}", c.ks, c.count, if c.enforced { "" } else { " (not enforced)" });
            if !c.passed() {
                return Err(CliError::Check(format!("KS {} >= {}", c.ks, super::KS_THRESHOLD)));
            }
        }
        Command::GradCheck {
            task,
            theta,
            sigma,
            sample_count,
            trials,
            seed,
            output_dir,
        } => {
            let res = cmd_grad_check(&task, &theta, sigma, sample_count, trials, seed, &output_dir);
            if let Ok(rows) = &res {
                for (j, r) in rows.iter().enumerate() {
                    println!("{j}: estimate {:e} +- {:e}, oracle {:e}", r.estimate, r.standard_error, r.oracle);
                }
            }
            res?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("prd: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn overrides(args: &[&str]) -> ConfigOverrides {
        let mut full = vec!["prd", "run"];
        full.extend_from_slice(args);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Run(o) => o,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_override_defaults() {
        let cfg = overrides(&["--task", "shadow", "--sample-count", "8", "--antithetic", "false", "--theta0=-0.2,1.5"])
            .resolve()
            .unwrap();
        assert_eq!(cfg.task, "shadow");
        assert_eq!(cfg.sample_count, 8);
        assert!(!cfg.antithetic);
        assert_eq!(cfg.theta0, Some(vec![-0.2, 1.5]));
    }

    #[test]
    fn bad_enum_flag_names_the_field() {
        match overrides(&["--sampling-mode", "sobol"]).resolve() {
            Err(Error::Config { field, message }) => {
                assert_eq!(field, "sampling_mode");
                assert!(message.contains("sobol"));
            }
            other => panic!("{other:?}"),
        }
    }
}
