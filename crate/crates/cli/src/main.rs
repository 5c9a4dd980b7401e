mod eval;
mod gen_data;
mod gradcheck;
mod manifest;
mod predict;
mod train;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use transdon::{Error, ErrorClass};

/// Exit codes by failure class.
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INTEGRITY: u8 = 4;
const EXIT_NUMERIC: u8 = 5;

/// A numerical check that ran to completion but did not meet its threshold.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "transdon",
    version,
    about = "Point-cloud surrogate for bottle top-load response"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData(gen_data::GenDataArgs),
    /// Train a model on a dataset.
    Train(train::TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(eval::EvalArgs),
    /// Predict displacements and force for one geometry.
    Predict(predict::PredictArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Integrity => EXIT_INTEGRITY,
                ErrorClass::Numeric => EXIT_NUMERIC,
            };
        }
        if cause.is::<CheckFailed>() {
            return EXIT_NUMERIC;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => gen_data::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
