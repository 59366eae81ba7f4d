use clap::{Parser, Subcommand};
use daisylb::scenario::{cmd_run, cmd_sweep};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "daisylb", about = "Cluster-based load balancing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its metrics as JSON.
    Run {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Also write the delivered-message trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Metrics output path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sweep spec and write one CSV row per (configuration, seed),
    /// plus per-configuration averages.
    Sweep {
        /// Sweep spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Cells to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, trace, out } => cmd_run(&config, trace.as_deref(), &out),
        Command::Sweep { spec, out, jobs } => cmd_sweep(&spec, &out, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("daisylb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
