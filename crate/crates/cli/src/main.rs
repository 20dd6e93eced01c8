//! `gridzero`: data generation, training, evaluation, policy comparison and
//! OPF diagnostics for the microgrid scheduler.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "gridzero",
    version,
    about = "Online microgrid battery scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic hourly PV / wind / load trace.
    GenData {
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an agent; writes checkpoints, the convergence log and a summary.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Run directory to resume from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run a trained agent over whole days; per-day and per-step reports.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the config saved with the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the trace named in the config.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Evaluate the first N complete days (default: all).
        #[arg(long)]
        days: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several policies on the same days against myopic and the DP oracle.
    Compare {
        /// Comma-separated: myopic, dp, agent, mpc<H>, mpc<H>-exact.
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        /// Needed for `agent`; also supplies the config when --config is absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the OPF for every battery action from one state.
    OpfCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// SystemState as JSON text or a path to a JSON file.
        #[arg(long)]
        state: String,
        /// Optional JSON dump of the table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { days, seed, out } => commands::gen_data(days, seed, &out),
        Command::Train {
            config,
            seed,
            out,
            checkpoint,
        } => commands::train(&config, seed, &out, checkpoint.as_deref()),
        Command::Evaluate {
            checkpoint,
            config,
            trace,
            days,
            seed,
            out,
        } => commands::evaluate(&commands::EvalArgs {
            config: config.as_deref(),
            checkpoint: Some(&checkpoint),
            trace: trace.as_deref(),
            days,
            seed,
            out: &out,
        }),
        Command::Compare {
            policies,
            checkpoint,
            config,
            trace,
            days,
            seed,
            out,
        } => commands::compare(
            &commands::EvalArgs {
                config: config.as_deref(),
                checkpoint: checkpoint.as_deref(),
                trace: trace.as_deref(),
                days,
                seed,
                out: &out,
            },
            &policies,
        ),
        Command::OpfCheck { config, state, out } => {
            commands::opf_check(config.as_deref(), &state, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
