//! `stepstress`: robust fitting, testing and simulation for
//! interval-monitored step-stress accelerated life tests.
//!
//! Four subcommands cover the workflow: `fit` estimates the model from a
//! counts file, `test` runs the Rao-type test of a configured constraint,
//! `influence` traces influence functions over contamination times, and
//! `simulate` reproduces the Monte Carlo studies. Exit codes are the only
//! success/failure channel: 0 success (fit converged / null retained),
//! 1 error, 2 non-convergence, 3 null rejected.

mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, SimulateOverrides, Study};
use stepstress::divergence::{FailureCounts, TuningParameter};
use stepstress::estimation::{fit_rmdpde, wald_intervals, FitOptions};
use stepstress::inference::{influence_restricted, run_rao_test, PerturbationPoint};
use stepstress::model::InspectionGrid;
use stepstress::montecarlo::{level_study, mse_study, power_study};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_REJECT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "stepstress",
    version,
    about = "Robust inference for interval-monitored step-stress life tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the minimum density power divergence estimator to observed counts.
    Fit(FitArgs),
    /// Rao-type test of the constraint configured in the experiment file.
    Test(TestArgs),
    /// Influence function at one contamination time, or a CSV sweep.
    Influence(InfluenceArgs),
    /// Monte Carlo studies: estimation error, test level, test power.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Observed counts (CSV with header "interval,count").
    #[arg(long)]
    data: PathBuf,
    /// Tuning parameter; overrides the config value.
    #[arg(long)]
    beta: Option<f64>,
    /// Fit under the configured constraint.
    #[arg(long)]
    restricted: bool,
    /// Print machine-readable JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TestArgs {
    /// Experiment configuration (JSON); must carry a constraint.
    #[arg(long)]
    config: PathBuf,
    /// Observed counts (CSV with header "interval,count").
    #[arg(long)]
    data: PathBuf,
    /// Tuning parameter; overrides the config value.
    #[arg(long)]
    beta: Option<f64>,
    /// Significance level; overrides the config value (default 0.05).
    #[arg(long)]
    alpha: Option<f64>,
    /// Print machine-readable JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InfluenceArgs {
    /// Experiment configuration (JSON); must carry theta0.
    #[arg(long)]
    config: PathBuf,
    /// Single contamination time; without it the command sweeps [0, t_L].
    #[arg(long)]
    t0: Option<f64>,
    /// Tuning parameter; overrides the config value.
    #[arg(long)]
    beta: Option<f64>,
    /// Influence of the restricted estimator under the configured constraint.
    #[arg(long)]
    restricted: bool,
    /// Number of sweep points across the observation window.
    #[arg(long, default_value_t = 201)]
    points: usize,
    /// Write the sweep CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print machine-readable JSON instead of a table (single-point mode).
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment configuration (JSON); must carry theta0.
    #[arg(long)]
    config: PathBuf,
    /// Which study to run: mse, level, or power.
    #[arg(long)]
    study: String,
    /// Replications; overrides the config value.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the study CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism). The
    /// STEPSTRESS_THREADS environment variable overrides this flag.
    #[arg(long)]
    threads: Option<usize>,
    /// Write the fully resolved config to this path and exit.
    #[arg(long)]
    emit_config: Option<PathBuf>,
    /// Print the study rows as JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Test(args) => cmd_test(&args),
        Command::Influence(args) => cmd_influence(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

/// Parses a counts CSV: header "interval,count", then rows 1..=L+1 in order.
fn load_counts(path: &Path, grid: &InspectionGrid) -> Result<FailureCounts> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading counts {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().with_context(|| format!("counts file {} is empty", path.display()))?;
    if header.trim() != "interval,count" {
        bail!(
            "counts file {}: header must be exactly \"interval,count\", got {:?}",
            path.display(),
            header.trim()
        );
    }
    let mut counts = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (interval, count) = line.split_once(',').with_context(|| {
            format!("counts file {} line {lineno}: expected \"interval,count\"", path.display())
        })?;
        let interval: usize = interval.trim().parse().with_context(|| {
            format!("counts file {} line {lineno}: field `interval` is not an integer", path.display())
        })?;
        if interval != counts.len() + 1 {
            bail!(
                "counts file {} line {lineno}: field `interval` must be {} (rows are sequential), got {interval}",
                path.display(),
                counts.len() + 1
            );
        }
        let count: u64 = count.trim().parse().with_context(|| {
            format!(
                "counts file {} line {lineno}: field `count` is not a nonnegative integer",
                path.display()
            )
        })?;
        counts.push(count);
    }
    let expected = grid.num_intervals() + 1;
    if counts.len() != expected {
        bail!(
            "counts file {}: expected {expected} rows (one per cell, censored cell last), found {}",
            path.display(),
            counts.len()
        );
    }
    Ok(FailureCounts::new(counts)?)
}

fn cmd_fit(args: &FitArgs) -> Result<u8> {
    let config = ExperimentConfig::load(&args.config)?;
    let plan = config.to_plan()?;
    let grid = config.to_grid(&plan)?;
    let counts = load_counts(&args.data, &grid)?;
    let beta = TuningParameter::new(config.single_beta(args.beta)?)?;
    let constraint =
        if args.restricted { Some(config.require_constraint("--restricted")?) } else { None };
    let alpha = config.alpha.unwrap_or(0.05);

    let fit = match fit_rmdpde(&counts, &plan, &grid, beta, constraint.as_ref(), &FitOptions::default()) {
        Ok(fit) => fit,
        Err(stepstress::Error::NonConvergence(msg)) => {
            eprintln!("fit did not converge: {msg}");
            return Ok(EXIT_NO_CONVERGENCE);
        }
        Err(err) => return Err(err.into()),
    };
    let wald = wald_intervals(&fit, alpha).ok();
    if args.json {
        let report = output::FitReport::new(&fit, wald.as_ref(), alpha);
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        output::print_fit_table(&fit, wald.as_ref(), alpha);
    }
    Ok(if fit.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

fn cmd_test(args: &TestArgs) -> Result<u8> {
    let config = ExperimentConfig::load(&args.config)?;
    let plan = config.to_plan()?;
    let grid = config.to_grid(&plan)?;
    let counts = load_counts(&args.data, &grid)?;
    let beta = TuningParameter::new(config.single_beta(args.beta)?)?;
    let constraint = config.require_constraint("test")?;
    let alpha = args.alpha.or(config.alpha).unwrap_or(0.05);

    let result = run_rao_test(&counts, &plan, &grid, beta, &constraint, alpha)?;
    if args.json {
        let report = output::TestReport::new(&result);
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        output::print_test_table(&result);
    }
    Ok(if result.reject { EXIT_REJECT } else { EXIT_OK })
}

fn cmd_influence(args: &InfluenceArgs) -> Result<u8> {
    let config = ExperimentConfig::load(&args.config)?;
    let plan = config.to_plan()?;
    let grid = config.to_grid(&plan)?;
    let theta0 = config.require_theta0("influence")?;
    let beta = TuningParameter::new(config.single_beta(args.beta)?)?;
    let constraint =
        if args.restricted { Some(config.require_constraint("--restricted")?) } else { None };

    if let Some(t0) = args.t0 {
        let point = PerturbationPoint::new(t0, &grid)?;
        let iff = influence_restricted(&point, &theta0, &plan, &grid, beta, constraint.as_ref())?;
        if args.json {
            let report = serde_json::json!({
                "t0": point.t0(),
                "cell": point.cell(),
                "if_a0": iff[0],
                "if_a1": iff[1],
                "if_eta": iff[2],
                "norm": iff.norm(),
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        } else {
            println!(
                "influence at t0 = {} (cell {}): a0 {}, a1 {}, eta {}, norm {}",
                output::sig6(point.t0()),
                point.cell(),
                output::sig6(iff[0]),
                output::sig6(iff[1]),
                output::sig6(iff[2]),
                output::sig6(iff.norm())
            );
        }
        return Ok(EXIT_OK);
    }

    if args.points < 2 {
        bail!("--points must be at least 2 to span the observation window");
    }
    let termination = plan.termination();
    let mut csv = String::from("t0,if_a0,if_a1,if_eta,norm\n");
    for i in 0..args.points {
        let t0 = termination * i as f64 / (args.points - 1) as f64;
        let point = PerturbationPoint::new(t0, &grid)?;
        let iff = influence_restricted(&point, &theta0, &plan, &grid, beta, constraint.as_ref())?;
        csv.push_str(&format!("{t0},{},{},{},{}\n", iff[0], iff[1], iff[2], iff.norm()));
    }
    match &args.out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

/// Worker-thread resolution: the STEPSTRESS_THREADS environment variable
/// overrides --threads, which overrides available parallelism.
fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Ok(raw) = std::env::var("STEPSTRESS_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .with_context(|| format!("STEPSTRESS_THREADS must be a positive integer, got {raw:?}"))?;
        if n == 0 {
            bail!("STEPSTRESS_THREADS must be at least 1");
        }
        return Ok(n);
    }
    if let Some(n) = flag {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        return Ok(n);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8> {
    let config = ExperimentConfig::load(&args.config)?;
    let study = Study::parse(&args.study)?;
    let overrides = SimulateOverrides { reps: args.reps, seed: args.seed };
    let cfg = config.study_config(study, &overrides)?;

    if let Some(path) = &args.emit_config {
        let resolved = config::resolved(study, &cfg);
        let text = serde_json::to_string_pretty(&resolved)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        return Ok(EXIT_OK);
    }

    let threads = resolve_threads(args.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building the worker thread pool")?;
    let table = pool.install(|| match study {
        Study::Mse => mse_study(&cfg),
        Study::Level => level_study(&cfg),
        Study::Power => power_study(&cfg),
    })?;

    let csv = table.to_csv_string();
    if let Some(path) = &args.out {
        fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    if args.json {
        let report = serde_json::json!({ "study": study.name(), "rows": table.rows });
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else if args.out.is_none() {
        print!("{csv}");
    } else {
        output::print_study_table(&table);
    }
    Ok(EXIT_OK)
}
