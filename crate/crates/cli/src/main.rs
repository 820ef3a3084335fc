//! `dualmask`: mixture generation, training, denoising, evaluation and
//! profiling for the dual-input mask estimator.
//!
//! Exit codes: 0 on success, 1 on internal or numerical failure, 2 on bad input.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use crate::config::Settings;

/// A problem with what the user supplied; maps to exit code 2.
#[derive(Debug)]
pub struct BadInput(pub String);

impl fmt::Display for BadInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

#[derive(Debug, Parser)]
#[command(name = "dualmask", version, about = "Dual-input transformer noise suppression")]
struct Cli {
    /// Flat key=value file with model, training and run settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Increase log detail (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic speech-like and noise WAVs plus a mixing manifest.
    Synth(commands::SynthArgs),
    /// Mix every manifest utterance at every SNR of a list.
    Mix(commands::MixArgs),
    /// Turn a manifest into train/validation/test example shards.
    Dataset(commands::DatasetArgs),
    /// Train the mask estimator on a shard directory.
    Train(commands::TrainArgs),
    /// Enhance a noisy WAV with a trained model.
    Denoise(commands::DenoiseArgs),
    /// Enhance with ideal masks computed from the true clean and noise signals.
    DenoiseOracle(commands::OracleArgs),
    /// Score enhanced files against references.
    Evaluate(commands::EvaluateArgs),
    /// Time the streaming path frame by frame.
    Profile(commands::ProfileArgs),
    /// Dump spectrogram magnitudes and masks as delimited text.
    PlotData(commands::PlotArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<BadInput>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<dualmask::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

/// The error chain joined with `: `, skipping causes already quoted by their parent.
fn message(err: &anyhow::Error) -> String {
    let mut out = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        settings.set("seed", seed);
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a, settings),
        Command::Mix(a) => commands::mix(a, settings),
        Command::Dataset(a) => commands::dataset(a, settings),
        Command::Train(a) => commands::train(a, settings),
        Command::Denoise(a) => commands::denoise(a, settings),
        Command::DenoiseOracle(a) => commands::denoise_oracle(a, settings),
        Command::Evaluate(a) => commands::evaluate(a, settings),
        Command::Profile(a) => commands::profile(a, settings),
        Command::PlotData(a) => commands::plot_data(a, settings),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
