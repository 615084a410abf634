use std::path::Path;
use std::process::{Command, Output};

fn prd(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prd"));
    cmd.args(args).env_remove("PRD_OUT");
    if let Some(dir) = out_env {
        cmd.env("PRD_OUT", dir);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(prd(&["--help"], None).status.code(), Some(0));
    assert_eq!(prd(&["run", "--no-such-flag"], None).status.code(), Some(1));
    assert_eq!(prd(&[], None).status.code(), Some(1));
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("disc");
    let o = prd(
        &["run", "--task", "disc2d", "--iters", "8", "--output-dir", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["config.json", "reference.ppm", "initial.ppm", "final.ppm", "run.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(out.join("run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,theta_0,theta_1,image_mse,param_mse,sigma_0,sigma_1,n_evals_cumulative,wall_time_seconds"
    );
    assert_eq!(lines.count(), 8);

    // The echoed config reproduces the run.
    let again = dir.path().join("again");
    let o = prd(
        &[
            "run",
            "--config",
            out.join("config.json").to_str().unwrap(),
            "--output-dir",
            again.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(again.join("run.csv")).unwrap(), csv.as_bytes());
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let flag_dir = dir.path().join("from_flag");
    let o = prd(&["run", "--task", "quadratic", "--iters", "3"], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(env_dir.join("run.csv").is_file());

    let o = prd(
        &["run", "--task", "quadratic", "--iters", "3", "--output-dir", flag_dir.to_str().unwrap()],
        Some(&env_dir.join("unused")),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(flag_dir.join("run.csv").is_file());
    assert!(!env_dir.join("unused").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = prd(&["run", "--task", "teapot"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("teapot"));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"task": "disc2d", "sigma_zero": 0.3}"#).unwrap();
    let o = prd(&["run", "--config", cfg.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sigma_zero"));

    let o = prd(&["run", "--sample-count", "3"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sample_count"));

    let o = prd(&["run", "--task", "disc2d", "--estimator-kind", "reparam"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sample_check_writes_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let o = prd(&["sample-check", "--sigma", "0.7", "--count", "20000"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let hist = std::fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "bin_lo,bin_hi,count,expected");
    assert_eq!(hist.lines().count(), 51);
    let ks = std::fs::read_to_string(dir.path().join("ks.txt")).unwrap();
    assert!(ks.contains("verdict=pass"), "{ks}");
}

#[test]
fn grad_check_on_analytic_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let o = prd(
        &["grad-check", "--task", "quadratic2d", "--theta=0.4,-0.3", "--sigma", "0.3", "--trials", "50"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("grad_check.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let o = prd(
        &["grad-check", "--task", "quadratic", "--theta=0.4,0.1", "--sigma", "0.3"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ablate_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = prd(
        &[
            "ablate",
            "--task",
            "quadratic",
            "--iters",
            "20",
            "--ablation-seeds",
            "2",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "variant,img_median,para_median,img_ratio,para_ratio");
    assert!(rows[1].starts_with("base,") && rows[1].ends_with(",1.0,1.0"));
    assert_eq!(rows.len(), 5);
    assert!(dir.path().join("noAT").join("seed_1").join("run.csv").is_file());
}
