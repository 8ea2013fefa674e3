//! Command-line driver: JSON-configured subcommands writing deterministic,
//! file-based outputs.
//!
//! Every run writes `rows.csv` (raw replicate rows), `summary.json`
//! (aggregates plus verdicts) and `manifest.json` (config hash, code
//! version, effective seed — enough to reproduce the run byte for byte on
//! the same build) into the output directory; `simulate` additionally
//! writes the trajectory as `record.jsonl`.
//!
//! Exit codes: `0` success, `1` the run finished but at least one verdict
//! failed (failing criterion names go to standard error), `2` configuration
//! or runtime error. `--jobs` (or the `NEUROLAN_JOBS` environment variable)
//! bounds worker threads without affecting a single output byte.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::experiments::{names, numbered};
use crate::analysis::{
    chaos_rate_experiment, identifiability_scan, lan_experiment, normality_experiment,
    score_calibration, ExperimentReport, Verdict,
};
use crate::config::{ExperimentConfig, RunConfig};
use crate::estimator::mle;
use crate::model::{ModelSpec, Theta};
use crate::simulator::{simulate, TrajectoryRecord};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "neurolan",
    version,
    about = "Simulation and likelihood inference for mean-field spiking-neuron systems",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one finite-population trajectory and record every event.
    Simulate(RunArgs),
    /// Fit a recorded trajectory by maximum likelihood.
    Estimate(RunArgs),
    /// Quadratic likelihood-expansion experiment across population sizes.
    Lan(RunArgs),
    /// Sampling-distribution check of the standardized estimator.
    Normality(RunArgs),
    /// Empirical-measure convergence rate toward the mean-field limit.
    Chaos(RunArgs),
    /// Score moments against the limiting information matrix.
    Calibrate(RunArgs),
    /// Identifiability scan over a parameter grid.
    Identify(RunArgs),
    /// Check a config (schema, model certification, experiment invariants)
    /// without running anything.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Path of the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output section.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 or absent means one per core. Falls back to the
    /// NEUROLAN_JOBS environment variable.
    #[arg(long)]
    jobs: Option<usize>,
    /// Replaces the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Path of the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
}

/// Parses `argv` and runs the requested subcommand, returning the process
/// exit code. The first element of `argv` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successful terminations; anything else
            // (unknown subcommand, bad flag) is a usage error.
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                0
            } else {
                eprint!("{e}");
                2
            };
        }
    };
    let outcome = match cli.command {
        Command::Validate(args) => validate_command(&args),
        Command::Simulate(args) => run_command("simulate", &args),
        Command::Estimate(args) => run_command("estimate", &args),
        Command::Lan(args) => run_command("lan", &args),
        Command::Normality(args) => run_command("normality", &args),
        Command::Chaos(args) => run_command("chaos", &args),
        Command::Calibrate(args) => run_command("calibrate", &args),
        Command::Identify(args) => run_command("identify", &args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads and statically checks a config; prints nothing when it is valid.
fn validate_command(args: &ValidateArgs) -> Result<i32> {
    let (text, _) = read_config(&args.config)?;
    RunConfig::from_json(&text)?.validate()?;
    Ok(0)
}

fn run_command(kind: &str, args: &RunArgs) -> Result<i32> {
    let (text, config_sha256) = read_config(&args.config)?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if cfg.experiment.kind() != kind {
        return Err(Error::Config(format!(
            "config {} holds a {:?} experiment but the subcommand is {kind:?}",
            args.config.display(),
            cfg.experiment.kind()
        )));
    }
    cfg.validate()?;

    let jobs = resolve_jobs(args.jobs)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let output = pool.install(|| execute(&cfg))?;

    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| PathBuf::from(&o.directory)))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;

    let rows_csv = output.report.rows_csv();
    fs::write(out_dir.join("rows.csv"), &rows_csv)?;
    let summary = serde_json::to_string_pretty(&output.report.summary_json())?;
    fs::write(out_dir.join("summary.json"), summary)?;
    if let Some(record) = &output.record_jsonl {
        fs::write(out_dir.join("record.jsonl"), record)?;
    }
    let manifest = json!({
        "command": kind,
        "config_path": args.config.display().to_string(),
        "config_sha256": config_sha256,
        "code_version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "rows_sha256": sha256_hex(rows_csv.as_bytes()),
    });
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    if output.report.passed() {
        println!(
            "{kind}: {} rows, {} verdicts, wrote {}",
            output.report.rows.len(),
            output.report.verdicts.len(),
            out_dir.display()
        );
        Ok(0)
    } else {
        eprintln!(
            "{kind}: verdicts failed: {}",
            output.report.failed_criteria().join(", ")
        );
        Ok(1)
    }
}

fn read_config(path: &PathBuf) -> Result<(String, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let sha = sha256_hex(text.as_bytes());
    Ok((text, sha))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// `--jobs` wins; otherwise NEUROLAN_JOBS is consulted; otherwise the pool
/// picks one thread per core.
fn resolve_jobs(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("NEUROLAN_JOBS") {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(format!("NEUROLAN_JOBS must be an unsigned integer, got {s:?}"))),
        _ => Ok(None),
    }
}

struct RunOutput {
    report: ExperimentReport,
    /// Serialized trajectory, present only for the simulate subcommand.
    record_jsonl: Option<String>,
}

fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.build_model()?;
    let seed = cfg.seed;
    let report = match &cfg.experiment {
        ExperimentConfig::Simulate(sim) => {
            let clock = Instant::now();
            let record = simulate(&model, &Theta(sim.theta_star.clone()), sim.n, sim.horizon, seed)?;
            let columns = names(&[
                "event_index",
                "time",
                "neuron",
                "pre_jump_state",
                "mark",
                "post_jump_state",
            ]);
            let rows: Vec<Vec<f64>> = record
                .events()
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    vec![
                        i as f64,
                        e.time,
                        e.neuron as f64,
                        e.pre_jump_state,
                        e.mark,
                        e.post_jump_state,
                    ]
                })
                .collect();
            let report = ExperimentReport {
                experiment: "simulate".into(),
                config: serde_json::to_value(sim)?,
                columns,
                rows,
                summary: json!({
                    "n": sim.n,
                    "horizon": sim.horizon,
                    "events": record.events().len(),
                    "final_state_mean": record.empirical_measure(sim.horizon)?.mean(),
                    "record_file": "record.jsonl",
                }),
                verdicts: Vec::new(),
                wall_clock_seconds: clock.elapsed().as_secs_f64(),
            };
            return Ok(RunOutput {
                report,
                record_jsonl: Some(record.to_jsonl()),
            });
        }
        ExperimentConfig::Estimate(est) => {
            let clock = Instant::now();
            let text = fs::read_to_string(&est.record).map_err(|e| {
                Error::Config(format!("cannot read record {}: {e}", est.record))
            })?;
            let record = TrajectoryRecord::from_jsonl(&model, &text)?;
            let opts = cfg.estimator_options();
            let fit = mle(&record, &opts)?;
            estimate_report(est, &model, &record, &fit, clock)?
        }
        ExperimentConfig::Lan(c) => lan_experiment(&model, c, seed)?,
        ExperimentConfig::Calibrate(c) => score_calibration(&model, c, seed)?,
        ExperimentConfig::Normality(c) => {
            normality_experiment(&model, c, &cfg.estimator_options(), seed)?
        }
        ExperimentConfig::Chaos(c) => chaos_rate_experiment(&model, c, seed)?,
        ExperimentConfig::Identify(c) => identifiability_scan(&model, c, seed)?,
    };
    Ok(RunOutput {
        report,
        record_jsonl: None,
    })
}

fn estimate_report(
    est: &crate::config::EstimateConfig,
    model: &Arc<ModelSpec>,
    record: &TrajectoryRecord,
    fit: &crate::estimator::MleResult,
    clock: Instant,
) -> Result<ExperimentReport> {
    let d = model.theta_box().dim();
    let mut columns = names(&[
        "n",
        "events",
        "converged",
        "at_boundary",
        "iterations",
        "log_likelihood",
        "grad_norm",
    ]);
    columns.extend(numbered("theta_hat", d));
    let mut row = vec![
        fit.n as f64,
        record.events().len() as f64,
        fit.converged as usize as f64,
        fit.at_boundary as usize as f64,
        fit.iterations as f64,
        fit.log_likelihood,
        fit.grad_norm,
    ];
    row.extend_from_slice(fit.theta_hat.as_slice());

    let mut summary = json!({
        "n": fit.n,
        "events": record.events().len(),
        "theta_hat": fit.theta_hat.as_slice(),
        "converged": fit.converged,
        "at_boundary": fit.at_boundary,
        "iterations": fit.iterations,
        "starts": fit.starts,
        "log_likelihood": fit.log_likelihood,
        "grad_norm": fit.grad_norm,
        "observed_info": fit.observed_info.to_rows(),
    });
    // Asymptotic standard errors from the observed per-neuron information,
    // when it is invertible: Cov(theta_hat) ~ (n * info)^{-1}.
    if let Ok(inv) = fit.observed_info.inverse() {
        let se: Vec<f64> = (0..d).map(|k| (inv[(k, k)] / fit.n as f64).sqrt()).collect();
        summary["standard_errors"] = json!(se);
    }
    if let Some(truth) = &est.theta_star {
        let error: Vec<f64> = fit
            .theta_hat
            .as_slice()
            .iter()
            .zip(truth)
            .map(|(a, b)| a - b)
            .collect();
        let norm = error.iter().map(|e| e * e).sum::<f64>().sqrt();
        summary["theta_star"] = json!(truth);
        summary["error"] = json!(error);
        summary["error_norm"] = json!(norm);
        columns.push("error_norm".into());
        row.push(norm);
    }

    Ok(ExperimentReport {
        experiment: "estimate".into(),
        config: serde_json::to_value(est)?,
        columns,
        rows: vec![row],
        summary,
        verdicts: vec![Verdict::new(
            "estimator-converged",
            fit.converged,
            fit.iterations as f64,
            "projected-Newton iterations reached a stationary interior or face point",
        )],
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    })
}
