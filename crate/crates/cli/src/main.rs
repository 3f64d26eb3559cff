//! rbsgmkit: run and sweep stochastic Galerkin / reduced basis experiments
//! from declarative TOML configs, and verify the solver against its dense
//! oracles.
//!
//! Exit codes: 0 converged / all checks pass, 2 ran but unconverged,
//! 1 configuration or I/O error. Diagnostics go to stderr; artifacts are
//! written into the output directory.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use rbsgm_core::experiment::{self, SweepAxes};
use rbsgm_core::{Error, RunConfig};

#[derive(Parser)]
#[command(name = "rbsgmkit", version, about = "Reduced basis stochastic Galerkin solver kit")]
struct Cli {
    /// Number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and the CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated list of stochastic dimensions, e.g. 5,7,10.
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    /// Comma-separated list of nodes per side, e.g. 33,65,129.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Comma-separated list of tolerances, e.g. 1e-4,1e-5.
    #[arg(long, value_delimiter = ',')]
    tol: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run(RunArgs),
    /// Run the cross product of m / n / tol values and aggregate a CSV.
    Sweep(SweepArgs),
    /// Run the small-instance dense-oracle verification suites.
    OracleCheck,
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rbsgm_core::set_threads(t) {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match cli.command {
        Command::Run(args) => match load_config(&args.config, args.seed) {
            Ok(cfg) => experiment::run_experiment(&cfg, &args.out),
            Err(e) => Err(e),
        },
        Command::Sweep(args) => match load_config(&args.config, args.seed) {
            Ok(cfg) => {
                let axes = SweepAxes {
                    m: args.m,
                    n: args.n,
                    tol: args.tol,
                };
                experiment::sweep(&cfg, &axes, &args.out)
            }
            Err(e) => Err(e),
        },
        Command::OracleCheck => {
            let results = experiment::oracle_check();
            let mut all = true;
            for r in &results {
                println!(
                    "{} {} — {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                all &= r.passed;
            }
            Ok(if all { 0 } else { 2 })
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
