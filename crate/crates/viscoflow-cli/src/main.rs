//! Command-line driver for the viscoplastic cavity solver.
//!
//! Subcommands: `run` (single solve), `compare` (algorithm grid), `adapt`
//! (residual-driven refinement loop) and `reference` (fixed-budget reference
//! solution). Every subcommand reads one JSON configuration document; any
//! field can be overridden with `--set path.to.field=value`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use viscoflow::app::{self, CommandOutcome};
use viscoflow::config;

#[derive(Parser)]
#[command(name = "viscoflow", version, about = "Viscoplastic cavity-flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON configuration document; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. --set solver.grad_tol=1e-4
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write convergence log, fields and summary.
    Run(CommonArgs),
    /// Run several algorithms over a Bi/mesh grid and tabulate iterations.
    Compare(CommonArgs),
    /// Solve with adaptive mesh refinement cycles.
    Adapt(CommonArgs),
    /// Compute and store a fixed-iteration reference solution.
    Reference(CommonArgs),
}

fn load(args: &CommonArgs) -> viscoflow::Result<config::ConfigDoc> {
    let mut doc = config::load_config(args.config.as_deref(), &args.set)?;
    if let Some(out) = &args.out {
        doc.output.dir = out.clone();
    }
    Ok(doc)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => load(args).and_then(|doc| app::cmd_run(&doc)),
        Command::Compare(args) => load(args).and_then(|doc| app::cmd_compare(&doc)),
        Command::Adapt(args) => load(args).and_then(|doc| app::cmd_adapt(&doc)),
        Command::Reference(args) => load(args).and_then(|doc| {
            app::cmd_reference(&doc).map(|path| {
                println!("reference written to {}", path.display());
                CommandOutcome::Converged
            })
        }),
    };
    match &result {
        Ok(CommandOutcome::Converged) => {}
        Ok(CommandOutcome::IterationCap) => {
            eprintln!("viscoflow: iteration cap reached before the requested tolerance");
        }
        Err(e) => eprintln!("viscoflow: {e}"),
    }
    ExitCode::from(app::exit_code(&result) as u8)
}
