//! `volterra-sens`: simulate paths, run sensitivity estimators, compare them and
//! run scaling studies from a TOML configuration.
//!
//! Exit codes: 0 success, 2 configuration problems (unreadable file, parse
//! errors, violated hypotheses), 3 runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use volterra_sens::experiment::{
    run_compare, run_greek, run_simulate, run_study, sidecar_path, with_threads, write_artifacts, Runner,
    StudyResult,
};
use volterra_sens::model::ExperimentConfig;
use volterra_sens::Error;

#[derive(Parser)]
#[command(name = "volterra-sens", version, about = "Sensitivities of stochastic Volterra equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; a JSON sidecar with provenance is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, env = "VOLTERRA_SENS_THREADS", default_value_t = 0)]
    threads: usize,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and write a binary dump plus terminal statistics.
    Simulate(Common),
    /// Run the single configured estimator.
    Greek(Common),
    /// Run every configured estimator on shared seeds and compare them pairwise.
    Compare(Common),
    /// Run the configured study.
    Study {
        /// alpha_sweep, maturity_scaling, delta_limit, variance_profile or regularity;
        /// defaults to the configured kind.
        kind: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<Runner, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Runner::new(&cfg).map_err(|e| match e {
        Error::Config(msg) => Failure::Config(msg),
        other => Failure::Config(other.to_string()),
    })
}

fn finish(result: StudyResult, out: &Path) -> Result<(), Failure> {
    let sidecar = write_artifacts(&result, out)?;
    for line in &result.summary {
        println!("{line}");
    }
    println!("wrote {} and {}", out.display(), sidecar.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (common, kind) = match &cli.command {
        Command::Simulate(c) | Command::Greek(c) | Command::Compare(c) => (c, None),
        Command::Study { kind, common } => (common, kind.as_deref()),
    };
    let runner = load(common)?;
    let threads = common.threads;
    match &cli.command {
        Command::Simulate(c) => {
            let summary = with_threads(threads, || run_simulate(&runner, &c.out))??;
            let json = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Runtime(e.to_string()))?;
            let sidecar = sidecar_path(&c.out);
            std::fs::write(&sidecar, json + "\n").map_err(|e| Failure::Runtime(e.to_string()))?;
            println!(
                "{} paths, {} steps: mean X_T = {:.6}, var X_T = {:.6}",
                summary.n_paths, summary.steps, summary.terminal_mean, summary.terminal_variance
            );
            println!("wrote {} and {}", c.out.display(), sidecar.display());
            Ok(())
        }
        Command::Greek(c) => finish(with_threads(threads, || run_greek(&runner))??, &c.out),
        Command::Compare(c) => {
            let result = with_threads(threads, || run_compare(&runner))??;
            let flagged = !result.disagreements.is_empty();
            finish(result, &c.out)?;
            if flagged {
                println!("some estimators disagree beyond 3 combined standard errors");
            }
            Ok(())
        }
        Command::Study { common, .. } => finish(with_threads(threads, || run_study(&runner, kind))??, &common.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error:\n{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime failure: {msg}");
            ExitCode::from(3)
        }
    }
}
