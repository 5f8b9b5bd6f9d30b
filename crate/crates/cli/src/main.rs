//! `lampwalk`: command-line front end.
//!
//! Exit codes: 0 success, 1 other runtime error, 2 a verification failed,
//! 3 a size cap or budget was hit, 4 usage error. `LAMPWALK_THREADS` sets
//! the worker count and `LAMPWALK_CACHE_DEPTH` the survival-table depth.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "lampwalk", version, about = "Random walks on the lamplighter group with non-vanishing translate distance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Checks on the n^{-5/4} distribution and its record events.
    Heavytail {
        #[command(subcommand)]
        action: HeavytailAction,
    },
    /// Build a construction state and write it as JSON.
    Construct(commands::ConstructArgs),
    /// Sample pairs from the typical event and look for h r(alpha) = r(beta).
    ClaimCheck(commands::ClaimArgs),
    /// Estimate the mass of the typical event.
    OmegaMass(commands::OmegaArgs),
    /// Translate-distance profile of the measure of a state.
    TvProfile(commands::ProfileArgs),
    /// Translate-distance profile of a uniform step on a control group.
    Control(commands::ControlArgs),
    /// Run the whole pipeline from a TOML configuration.
    Pipeline(commands::PipelineArgs),
}

#[derive(Subcommand, Debug)]
enum HeavytailAction {
    /// Normalizer, tail enclosure, calibration with holdout, record rates.
    Verify(commands::VerifyArgs),
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("LAMPWALK_THREADS") else { return Ok(()) };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("LAMPWALK_THREADS = `{raw}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(e.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Heavytail { action: HeavytailAction::Verify(a) } => commands::heavytail_verify(a),
        Command::Construct(a) => commands::construct(a),
        Command::ClaimCheck(a) => commands::claim_check(a),
        Command::OmegaMass(a) => commands::omega_mass(a),
        Command::TvProfile(a) => commands::tv_profile(a),
        Command::Control(a) => commands::control(a),
        Command::Pipeline(a) => commands::pipeline(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lampwalk: {f}");
            ExitCode::from(f.code())
        }
    }
}
