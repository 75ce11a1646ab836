//! `jumpq` — solve, sample, and verify jump-process transition kernels.

use clap::{Parser, Subcommand};
use jumpq_cli::{
    cmd_simulate, cmd_solve, cmd_verify, configure_threads, ModelSource, Route, SimulateArgs,
    SolveArgs, VerifyArgs,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "jumpq",
    version,
    about = "Transition kernels and path sampling for jump Markov processes \
             with piecewise time-dependent rates",
    after_help = "Exit codes: 0 success, 1 verification check failed, \
                  2 usage/config error, 3 numerical failure.\n\
                  Set JUMPQ_THREADS to control the worker thread count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the kernel P(u,·;t,·) by one route and write it as CSV.
    Solve {
        /// Model configuration file (JSON).
        #[arg(long, conflicts_with = "scenario")]
        model: Option<PathBuf>,
        /// Bundled scenario id instead of a model file.
        #[arg(long)]
        scenario: Option<String>,
        /// Solver route.
        #[arg(long, default_value = "backward")]
        route: Route,
        /// Window start (defaults to the scenario window).
        #[arg(long)]
        u: Option<f64>,
        /// Window end (defaults to the scenario window).
        #[arg(long)]
        t: Option<f64>,
        /// Solver tolerance: series tail bound or ODE relative tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample paths and write the dump plus the empirical kernel.
    Simulate {
        /// Model configuration file (JSON).
        #[arg(long, conflicts_with = "scenario")]
        model: Option<PathBuf>,
        /// Bundled scenario id instead of a model file.
        #[arg(long)]
        scenario: Option<String>,
        /// Number of paths (default 10000, or the scenario's setting).
        #[arg(long)]
        paths: Option<usize>,
        /// RNG seed; path i runs on stream (seed, i).
        #[arg(long)]
        seed: Option<u64>,
        /// Start time of the observation window.
        #[arg(long)]
        u: Option<f64>,
        /// End time of the observation window.
        #[arg(long)]
        horizon: Option<f64>,
        /// Jump budget per path; hitting it classifies the path as exploded.
        #[arg(long)]
        jump_cap: Option<usize>,
        /// Initial state (point mass) when no scenario is given.
        #[arg(long, default_value_t = 0)]
        x0: usize,
        /// Output directory for paths.jsonl and empirical.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the bundled verification battery and emit reports.
    Verify {
        /// Scenario id, or "all".
        #[arg(long, default_value = "all")]
        scenario: String,
        /// Output directory for report JSON files and checks.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// List the bundled scenario ids.
    Scenarios,
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve {
            model,
            scenario,
            route,
            u,
            t,
            tol,
            out,
        } => source(model, scenario).and_then(|source| {
            cmd_solve(&SolveArgs {
                source,
                route,
                u,
                t,
                tol,
                out,
            })
        }),
        Command::Simulate {
            model,
            scenario,
            paths,
            seed,
            u,
            horizon,
            jump_cap,
            x0,
            out,
        } => source(model, scenario).and_then(|source| {
            cmd_simulate(&SimulateArgs {
                source,
                paths,
                seed,
                u,
                horizon,
                jump_cap,
                x0,
                out_dir: out,
            })
        }),
        Command::Verify { scenario, out } => cmd_verify(&VerifyArgs {
            scenario,
            out_dir: out,
        })
        .map(|_| ()),
        Command::Scenarios => {
            for sc in jumpq_core::scenarios::all() {
                println!("{:32} {}", sc.id, sc.description);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jumpq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn source(
    model: Option<PathBuf>,
    scenario: Option<String>,
) -> Result<ModelSource, jumpq_cli::CliError> {
    match (model, scenario) {
        (Some(path), None) => Ok(ModelSource::File(path)),
        (None, Some(id)) => Ok(ModelSource::Scenario(id)),
        _ => Err(jumpq_cli::CliError::Usage(
            "provide exactly one of --model or --scenario".into(),
        )),
    }
}
