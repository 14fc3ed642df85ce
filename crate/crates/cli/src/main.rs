//! `pcf`: synthetic flow generation, coordinate-field encoding, confidence
//! estimation, evaluation and multi-homography labelling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cmd;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ConfigFile;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "pcf",
    version,
    about = "Probabilistic coordinate fields from dense flow"
)]
struct Cli {
    /// `key = value` settings file; flags and PCF_* variables take precedence.
    #[arg(long, global = true, env = "PCF_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a forward/backward flow pair from a homography.
    Synth(cmd::synth::SynthArgs),
    /// Build one BCS pair and write the source, target and remapped fields.
    Encode(cmd::encode::EncodeArgs),
    /// Fit confidence and assemble a set of PCF entries.
    Pcf(cmd::pcf::PcfArgs),
    /// Cumulative IoU of stored reliable regions against a ground-truth mask.
    Eval(cmd::eval::EvalArgs),
    /// Label correspondences by sequentially fitted homographies.
    Multihomog(cmd::multihomog::MultihomogArgs),
    /// Export consistency flags for sparse correspondences.
    Flags(cmd::flags::FlagsArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd::synth::run(&a),
        Command::Encode(a) => cmd::encode::run(&a, &file),
        Command::Pcf(a) => cmd::pcf::run(&a, &file),
        Command::Eval(a) => cmd::eval::run(&a),
        Command::Multihomog(a) => cmd::multihomog::run(&a, &file),
        Command::Flags(a) => cmd::flags::run(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
