//! Batch pipeline behind the `nowcast` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};

pub use commands::exit_code;
pub use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "nowcast", version, about = "Train and evaluate recurrent-convolutional nowcasting models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic advecting-field dataset.
    GenData(commands::GenDataArgs),
    /// Train a forecaster (and optionally a conditional pair).
    Train(commands::TrainArgs),
    /// Write predictions of a model, conditional pair or ensemble.
    Predict(commands::PredictArgs),
    /// Fit ensemble weights on precomputed member predictions.
    FitEnsemble(commands::FitEnsembleArgs),
    /// Score predictions or models and write MSE reports.
    Evaluate(commands::EvaluateArgs),
    /// Draw input/truth/prediction strips as PGM images.
    Render(commands::RenderArgs),
}

pub fn run(cli: &Cli) -> anyhow::Result<String> {
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Predict(a) => commands::predict_cmd(a),
        Command::FitEnsemble(a) => commands::fit_ensemble_cmd(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Render(a) => commands::render_cmd(a),
    }
}
