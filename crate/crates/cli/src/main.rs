use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use netmarl_cli::{
    graph_report, load_config, plan_sweep, render_graph_report, resolve_out_dir, run_experiment,
    run_sweep, OUT_ENV,
};
use netmarl_core::config::ConfigError;
use netmarl_core::engine::{EngineError, Simulation};

/// Decentralized actor-critic simulator with adversary-resilient consensus.
#[derive(Debug, Parser)]
#[command(name = "netmarl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: config `output`, then $NETMARL_OUT, then ./runs].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress progress output.
        #[arg(long)]
        quiet: bool,
    },
    /// Run every entry of a sweep file in parallel.
    Sweep {
        /// Sweep file (TOML) naming a base config and override tables.
        #[arg(long)]
        config: PathBuf,
        /// Master seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root; each run writes run-XXX-<name>/ below it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Report connectivity, degrees, adversary locality and robustness.
    CheckGraph {
        #[arg(long)]
        config: PathBuf,
        /// Seed used for adversary placement.
        #[arg(long)]
        seed: Option<u64>,
        /// Emit the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Validate a config (including environment, graph and placement), then
    /// print it with defaults resolved.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, out, quiet } => {
            let config = load_config(&config, seed)?;
            for w in config.warnings() {
                eprintln!("warning: {w}");
            }
            let out_dir = resolve_out_dir(out.as_deref(), config.output.as_deref());
            let summary = run_experiment(&config, &out_dir, |row| {
                if !quiet {
                    eprintln!(
                        "round {:>10}  J {:.6}  disagreement {:.3e}",
                        row.round, row.j_oracle, row.disagreement
                    );
                }
            })?;
            if !quiet {
                println!("{}", serde_json::to_string_pretty(&summary)?);
                println!("artifacts written to {}", out_dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, seed, out, jobs, quiet } => {
            let plans = plan_sweep(&config, seed)?;
            let out_dir = out
                .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs"));
            let outcomes = run_sweep(&plans, &out_dir, jobs, quiet)?;
            let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
            if !quiet {
                println!("{} runs, {failed} failed; results in {}", outcomes.len(), out_dir.display());
            }
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::CheckGraph { config, seed, json } => {
            let config = load_config(&config, seed)?;
            let report = graph_report(&config)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", render_graph_report(&report));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let config = load_config(&config, None)?;
            Simulation::new(&config)?;
            for w in config.warnings() {
                eprintln!("warning: {w}");
            }
            print!("{}", config.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<ConfigError>() || matches!(e.downcast_ref::<EngineError>(), Some(EngineError::Config(_)))
    })
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
