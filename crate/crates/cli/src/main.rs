use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eads_cli::config::Scenario;
use eads_cli::presets;
use eads_cli::run::{self, CliError};

#[derive(Parser)]
#[command(
    name = "eads",
    version,
    about = "Decoherence-suppression loop simulator: theory curves, Wigner maps, \
             engine cross-checks and homodyne tomography"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fidelity and negativity curves over step count (CSV + SVG)
    Curves(RunArgs),
    /// Wigner-function heat maps at selected steps (CSV + SVG)
    Wigner(RunArgs),
    /// Cross-check the trajectory engine against the analytic channel
    Oracle(RunArgs),
    /// Sample homodyne data, reconstruct the state, bootstrap the errors
    Tomography(RunArgs),
    /// Inspect the bundled scenario presets
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
}

#[derive(Subcommand)]
enum PresetsAction {
    /// List preset names with one-line descriptions
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Bundled preset name (see `eads presets list`)
    #[arg(value_name = "PRESET", conflicts_with = "config")]
    preset: Option<String>,

    /// Scenario file (TOML; see README for the key reference)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (defaults to the scenario's own)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Random-seed override
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Trajectory-count override for the Monte Carlo engine
    #[arg(long, value_name = "N")]
    n_traj: Option<usize>,

    /// Engine override: analytic, trajectory or both
    #[arg(long, value_name = "ENGINE")]
    engine: Option<String>,
}

fn scenario_from(args: &RunArgs) -> Result<Scenario, CliError> {
    let mut s = match (&args.preset, &args.config) {
        (Some(name), _) => presets::preset(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset \"{name}\"; run `eads presets list`"
            ))
        })?,
        (None, Some(path)) => Scenario::from_file(path).map_err(|e| CliError::Config(e.0))?,
        (None, None) => {
            return Err(CliError::Config(
                "pass a preset name or --config PATH".into(),
            ))
        }
    };
    s.apply_overrides(
        args.out.clone(),
        args.seed,
        args.n_traj,
        args.engine.as_deref(),
    )
    .map_err(|e| CliError::Config(e.0))?;
    Ok(s)
}

/// Size the worker pool from EADS_WORKERS before any parallel work starts.
fn configure_workers() -> Result<(), CliError> {
    let Ok(text) = std::env::var("EADS_WORKERS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            CliError::Config(format!(
                "EADS_WORKERS must be a positive integer, got \"{text}\""
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|()| match &cli.cmd {
        Cmd::Curves(a) => run::cmd_curves(&scenario_from(a)?),
        Cmd::Wigner(a) => run::cmd_wigner(&scenario_from(a)?),
        Cmd::Oracle(a) => run::cmd_oracle(&scenario_from(a)?),
        Cmd::Tomography(a) => run::cmd_tomography(&scenario_from(a)?),
        Cmd::Presets {
            action: PresetsAction::List,
        } => {
            print!("{}", presets::listing());
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
