//! `perch`: plan, certify, simulate, and re-validate quadrotor perching
//! maneuvers on inclined surfaces.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perch_cli::pipeline::{self, PipelineError};
use perch_cli::scenario;

#[derive(Parser)]
#[command(
    name = "perch",
    version,
    about = "Minimum-snap perching: plan, certify thrust bounds, simulate tracking",
    after_help = "Exit codes: 0 success, 1 usage/IO error, 2 plan infeasible, \
                  3 thrust certificate failed, 4 simulation violated the touchdown contract."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and certify a plan; write trajectory and report artifacts.
    Plan(RunArgs),
    /// Plan, then track the plan in closed loop; also write trace and metrics.
    Simulate(RunArgs),
    /// Run the built-in {60, 90} deg x {1.7, 3} m grid concurrently.
    Campaign(CampaignArgs),
    /// Re-validate an artifact directory written by plan or simulate.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Directory the artifacts are written into.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario's noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also print the slack report.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct CampaignArgs {
    /// Directory receiving one subdirectory per grid cell.
    #[arg(long, default_value = "campaign")]
    out: PathBuf,
    /// Noise seed for every cell.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also print per-cell slack reports.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Artifact directory to re-validate.
    dir: PathBuf,
}

fn load(args: &RunArgs) -> Result<scenario::Scenario, PipelineError> {
    let mut sc = scenario::load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
        if let Some(noise) = &mut sc.noise {
            noise.seed = seed;
        }
    }
    Ok(sc)
}

fn run() -> Result<(), PipelineError> {
    match Cli::parse().command {
        Command::Plan(args) => {
            let sc = load(&args)?;
            pipeline::run_plan(&sc, &args.out, args.verbose)?;
            Ok(())
        }
        Command::Simulate(args) => {
            let sc = load(&args)?;
            pipeline::run_simulate(&sc, &args.out, args.verbose)?;
            Ok(())
        }
        Command::Campaign(args) => {
            let worst = pipeline::run_campaign(&args.out, args.seed, args.verbose)?;
            if worst == 0 {
                Ok(())
            } else {
                // The per-cell diagnostics are already printed; the
                // campaign's own exit code is the worst cell's.
                std::process::exit(worst)
            }
        }
        Command::Check(args) => {
            let verified = pipeline::run_check(&args.dir)?;
            for name in &verified {
                println!("check: {name} ok");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
