//! `critnet`: susceptibilities, kernel flows, universality classes and
//! Monte-Carlo ensembles from the command line.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use critnet::Error;

use config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "critnet", version, about = "Criticality analysis of deep fully connected networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Susceptibilities χ∥, χ⊥, their ratio, g and h over a K grid.
    Suscept(#[command(flatten)] Overrides),
    /// Infinite-width kernel, perturbation and vertex flow across layers.
    Flow(#[command(flatten)] Overrides),
    /// Universality class of one or more activations.
    Classify(#[command(flatten)] Overrides),
    /// Empirical kernels and four-point vertex of an initialized ensemble.
    InitEnsemble(#[command(flatten)] Overrides),
    /// Train an ensemble and record kernel statistics and test outputs.
    TrainEnsemble(#[command(flatten)] Overrides),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (flags, run): (&Overrides, fn(&ExperimentConfig) -> critnet::Result<()>) = match &cli.command {
        Command::Suscept(o) => (o, commands::suscept),
        Command::Flow(o) => (o, commands::flow),
        Command::Classify(o) => (o, commands::classify),
        Command::InitEnsemble(o) => (o, commands::init_ensemble),
        Command::TrainEnsemble(o) => (o, commands::train_ensemble),
    };
    match ExperimentConfig::resolve(flags).and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("critnet: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
