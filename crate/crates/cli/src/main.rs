use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gridconsensus::{commands, CliError, ModeSpec, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "gridconsensus",
    version,
    about = "Consensus-based supply-demand balancing for power grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (JSON). Defaults to the built-in six-node grid.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for CSV and summary files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the mode in the config.
    #[arg(long, global = true)]
    mode: Option<ModeArg>,

    /// Record failed audits and keep going instead of stopping at the first one.
    #[arg(long, global = true)]
    continue_on_audit_failure: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    With,
    Without,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check topology, capacities and demand realizability.
    Validate,
    /// Split one total demand into per-node targets.
    Coordinate {
        #[arg(long, allow_negative_numbers = true)]
        demand: f64,
    },
    /// Simulate the scenario and export the time series.
    Run,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDCONSENSUS_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let overrides = Overrides {
        config: cli.config,
        seed: cli.seed,
        mode: cli.mode.map(|m| match m {
            ModeArg::With => ModeSpec::WithCoordination,
            ModeArg::Without => ModeSpec::WithoutCoordination,
        }),
        continue_on_audit_failure: cli.continue_on_audit_failure,
    };
    let stdout = &mut io::stdout().lock();
    let result = match cli.command {
        Command::Validate => commands::validate(&overrides, stdout),
        Command::Coordinate { demand } => {
            commands::coordinate(&overrides, demand, cli.out.as_deref(), stdout)
        }
        Command::Run => match &cli.out {
            Some(dir) => commands::run(&overrides, dir, stdout).map(drop),
            None => Err(CliError::Usage("run needs --out DIR".into())),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
