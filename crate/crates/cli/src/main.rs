use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridsmpc_cli::bench::BenchOptions;
use gridsmpc_cli::{cmd_bench, cmd_grid_dump, cmd_run, BenchArgs, Exit, GridDumpArgs, RunArgs};

/// Grid-based stochastic MPC highway simulator.
///
/// Log verbosity follows the GRIDSMPC_LOG environment variable
/// (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "gridsmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory, hull, timing and metrics files.
    Run {
        /// Scenario TOML file or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Drive the target vehicles with sampled disturbances.
        #[arg(long)]
        noise: bool,
        /// Also write SVG snapshots and an overview drawing.
        #[arg(long)]
        render: bool,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Planning time per iteration against the number of target vehicles.
    Bench {
        /// Comma-separated vehicle counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        tvs: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated seconds per run.
        #[arg(long, default_value_t = 20.0)]
        duration: f64,
        /// Disable the target vehicle disturbances.
        #[arg(long)]
        no_noise: bool,
        #[arg(long)]
        force: bool,
    },
    /// Write the fused occupancy grid the planner sees at time T, step H.
    GridDump {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDSMPC_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out, seed, noise, render, force } => cmd_run(&RunArgs { scenario, out, seed, noise, render, force }),
        Command::Bench { tvs, runs, out, seed, duration, no_noise, force } => {
            cmd_bench(&BenchArgs { tvs, out, options: BenchOptions { runs, seed, duration, noise: !no_noise }, force })
        }
        Command::GridDump { scenario, t, h, out, force } => cmd_grid_dump(&GridDumpArgs { scenario, t, h, out, force }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Exit::Config as u8)
        }
    }
}
