//! eulerci: lamination hulls, laminates, exact subsolution fields, the
//! staged iteration and the planar rigidity computables from the command line.
//!
//! Exit codes: 0 success, 1 invariant violation or failed computation,
//! 2 usage or configuration error. `EULERCI_THREADS` sets the worker count.

mod commands;
mod config;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use crate::commands::Missing;
use crate::config::{BuildArgs, ConfigError, HullArgs, IntegrateArgs, LaminateArgs, RigidityArgs, RunConfig, VerifyArgs};

#[derive(Parser)]
#[command(name = "eulerci", version, about = "Convex-integration experiments for the stationary Euler equations")]
struct Cli {
    /// TOML file with one table per subcommand; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run the subcommand's invariant suite instead of the command.
    #[arg(long, global = true)]
    selftest: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lamination hull of the slice constraint points versus the convex hull.
    Hull(HullArgs),
    /// Finite-order laminate of a slice point or planar state, as LAM1.
    Laminate(LaminateArgs),
    /// Exact subsolution field realizing a laminate, as FLD1.
    Build(BuildArgs),
    /// Staged iteration from a catalog flow toward an energy profile.
    Integrate(IntegrateArgs),
    /// Recheck the invariants of an FLD1 file.
    Verify(VerifyArgs),
    /// Normal forms, boundary directions, g and commutativity defects.
    Rigidity(RigidityArgs),
}

fn setup_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("EULERCI_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| config::config_error(format!("EULERCI_THREADS must be a positive integer, got '{v}'")))?;
    if n == 0 {
        return Err(config::config_error("EULERCI_THREADS must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<Result<(), Missing>> {
    setup_threads()?;
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.selftest {
        let name = match cli.command {
            Command::Hull(_) => "hull",
            Command::Laminate(_) => "laminate",
            Command::Build(_) => "build",
            Command::Integrate(_) => "integrate",
            Command::Verify(_) => "verify",
            Command::Rigidity(_) => "rigidity",
        };
        return selftest::run(name).map(Ok);
    }
    match cli.command {
        Command::Hull(a) => commands::hull(a.merged(file.hull)),
        Command::Laminate(a) => commands::laminate(a.merged(file.laminate)),
        Command::Build(a) => commands::build(a.merged(file.build)),
        Command::Integrate(a) => commands::integrate(a.merged(file.integrate)).map(Ok),
        Command::Verify(a) => commands::verify(a.merged(file.verify)),
        Command::Rigidity(a) => commands::rigidity(a.merged(file.rigidity)).map(Ok),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    use eulerci::Error as E;
    e.chain().any(|c| {
        c.downcast_ref::<ConfigError>().is_some()
            || matches!(c.downcast_ref::<E>(), Some(E::InvalidArgument(_) | E::UnknownFlow(_) | E::Parse(_)) if !e.to_string().starts_with("invariant"))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Missing(sub, flag))) => {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = cmd.find_subcommand_mut(sub).expect("known subcommand");
            sub.error(clap::error::ErrorKind::MissingRequiredArgument, format!("{flag} is required")).exit()
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
