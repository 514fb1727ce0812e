//! `ssrgan` command-line tool.
//!
//! Every subcommand takes `--config FILE` plus `--key value` overrides whose
//! names mirror the config keys in kebab-case (`--batch-size 8`,
//! `--train.adam.lr 1e-4`). `--seed` sets every seed at once. Results go to
//! the directory given by `--out`, next to an echo of the effective config
//! and a `summary.txt`.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ssrgan", version, about = "Unpaired removal of cardiac artifacts from 1-D signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate training and evaluation recordings plus a manifest.
    Synth(Overrides),
    /// Band-pass and resample a recording (`--input`).
    Preprocess(Overrides),
    /// Train a model; `--preset model1..model6` selects an ablation.
    Train(Overrides),
    /// Denoise a 250 Hz recording (`--input`) with a checkpoint.
    Denoise(Overrides),
    /// Score a denoiser: `--before/--after`, `--checkpoint` with `--data`,
    /// or `--baseline aas`.
    Eval(Overrides),
    /// Run the finite-difference and adjoint suites.
    Gradcheck(Overrides),
    /// Export middle-content feature maps of a recording as CSV.
    Features(Overrides),
}

#[derive(Debug, Args)]
struct Overrides {
    /// `--config FILE` and `--key value` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "FLAGS")]
    flags: Vec<String>,
}

type Handler = fn(&RunConfig) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (f, args): (Handler, Overrides) = match cli.command {
        Command::Synth(o) => (commands::synth, o),
        Command::Preprocess(o) => (commands::preprocess, o),
        Command::Train(o) => (commands::train, o),
        Command::Denoise(o) => (commands::denoise_cmd, o),
        Command::Eval(o) => (commands::eval, o),
        Command::Gradcheck(o) => (commands::gradcheck, o),
        Command::Features(o) => (commands::features, o),
    };
    let cfg = RunConfig::from_args(&args.flags)?;
    f(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
