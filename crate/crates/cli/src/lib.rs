//! Command-line front end: field evaluation, curl maps, tail profiles, loss
//! evaluation, transport runs and the claim checklist.
//!
//! Each command reads an optional JSON config; flags override it, and it
//! overrides the built-in defaults. Commands that write files stage them in
//! a hidden directory and rename it into place, together with the fully
//! resolved `config.json`.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use driftlab::losses::LossKind;

pub use config::Common;

#[derive(Debug, Parser)]
#[command(name = "driftlab", version, about = "Drift fields, sharp kernels and conservatism tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Field evaluation
    Field {
        #[command(subcommand)]
        action: FieldCommand,
    },
    /// Curl and Jacobian asymmetry of a field over a grid
    CurlMap(Common),
    /// Attractive-field magnitudes along a line through 1-D data
    TailProfile(Common),
    /// Loss evaluation
    Loss {
        #[command(subcommand)]
        action: LossCommand,
    },
    /// Particle transport toward a toy distribution
    Transport(Common),
    /// Run the claim checklist; exits nonzero if any claim fails
    Verify(Common),
}

#[derive(Debug, Subcommand)]
pub enum FieldCommand {
    /// Evaluate a field at query points (CSV x1..xn, v1..vn)
    Eval(Common),
}

#[derive(Debug, Subcommand)]
pub enum LossCommand {
    /// Print {"kind", "value"} as JSON
    Eval(LossArgs),
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[command(flatten)]
    pub common: Common,
    /// log_kde or mmd_squared
    #[arg(long, value_name = "KIND")]
    pub loss: Option<LossKind>,
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Field {
            action: FieldCommand::Eval(c),
        } => commands::field_eval(c),
        Command::CurlMap(c) => commands::curl_map(c),
        Command::TailProfile(c) => commands::tail(c),
        Command::Loss {
            action: LossCommand::Eval(a),
        } => commands::loss_eval(&a.common, a.loss),
        Command::Transport(c) => commands::transport(c),
        Command::Verify(c) => commands::verify(c),
    }
}

/// Parses `args` and runs the command, reporting errors on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
