use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use sabra_cli::config::{load_settings, ExperimentConfig, ExperimentKind};
use sabra_cli::report::{exit_code, Check};
use sabra_cli::{execute, replay};

/// Exit status for usage, configuration and runtime errors.
const ERROR_EXIT: u8 = 3;

/// Experiments on the stochastic Sabra shell model and its Gaussian invariant measure.
#[derive(Debug, Parser)]
#[command(name = "sabra", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable. Values parse as TOML.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Random seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the configuration (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    shards: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Antisymmetry, energy and S_beta identities of the nonlinearity on random triples.
    VerifyAlgebra,
    /// Monte Carlo variance and kurtosis of the Gaussian measure.
    SampleMeasure,
    /// Integrate one trajectory and write it to trajectory.csv.
    Simulate,
    /// Stationarity of the measure under the stochastic dynamics.
    InvarianceTest,
    /// Decay of the Galerkin tail of the nonlinearity.
    TailDecay,
    /// Nested Monte Carlo check of the semigroup decay bound.
    SemigroupDecay,
    /// Conservation of energy and S_beta by the inviscid integrators.
    InviscidConservation,
    /// Stationary autocorrelations of the first components.
    Autocorr,
    /// Re-run the experiment recorded in a report and compare the outcomes.
    Replay {
        /// Path to a report.ndjson.
        report: PathBuf,
    },
}

impl Command {
    fn kind(&self) -> Option<ExperimentKind> {
        Some(match self {
            Command::VerifyAlgebra => ExperimentKind::VerifyAlgebra,
            Command::SampleMeasure => ExperimentKind::SampleMeasure,
            Command::Simulate => ExperimentKind::Simulate,
            Command::InvarianceTest => ExperimentKind::InvarianceTest,
            Command::TailDecay => ExperimentKind::TailDecay,
            Command::SemigroupDecay => ExperimentKind::SemigroupDecay,
            Command::InviscidConservation => ExperimentKind::InviscidConservation,
            Command::Autocorr => ExperimentKind::Autocorr,
            Command::Replay { .. } => return None,
        })
    }
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!(
            "{:<12} {} ({})",
            c.verdict.as_str().to_uppercase(),
            c.name,
            c.statistic.map_or_else(|| "-".into(), |s| format!("{s:.4e}"))
        );
    }
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Replay { report } => {
            let dir = cli
                .out
                .clone()
                .unwrap_or_else(|| report.parent().unwrap_or(std::path::Path::new(".")).join("replay"));
            let r = replay(report, &dir, cli.shards, cli.seed)?;
            print_checks(&r.checks);
            println!("replay written to {}", dir.display());
            Ok(exit_code(r.verdict()))
        }
        command => {
            let kind = command.kind().expect("experiment subcommand");
            let mut settings = load_settings(cli.config.as_deref(), &cli.set)?;
            if let Some(seed) = cli.seed {
                settings.seed = seed;
            }
            if let Some(out) = &cli.out {
                settings.out = Some(out.clone());
            }
            let cfg = ExperimentConfig::resolve(kind, settings)?;
            let dir = cfg.out_dir();
            let report = execute(&cfg, &dir, cli.shards)?;
            print_checks(&report.checks);
            println!(
                "{} ({:.2} s), outputs in {}",
                report.verdict(),
                report.footer.wall_clock_s,
                dir.display()
            );
            Ok(exit_code(report.verdict()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ERROR_EXIT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ERROR_EXIT)
        }
    }
}
