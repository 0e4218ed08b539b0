mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Facial landmark localisation: training, inference and evaluation.
#[derive(Debug, Parser)]
#[command(name = "facecsr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long)]
    seed: Option<u64>,
    /// `key = value` configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the long final cascade.
    TrainFinal {
        /// Dataset directory with images/ and annotations/.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the two-stage cascade used to estimate pose.
    TrainPose {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train one box refiner per detector source plus the whole-image box regressor.
    TrainBoxes {
        /// Dataset directory with images/, annotations/ and detections.tsv.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Predict landmarks for every image of a dataset directory.
    Localize {
        /// Directory with images/ and optionally detections.tsv.
        #[arg(long)]
        data: PathBuf,
        /// Directory holding the trained model files.
        #[arg(long)]
        models: PathBuf,
        /// Detection manifest to use instead of <data>/detections.tsv.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against ground truth.
    Evaluate {
        /// Directory of predicted .pts files.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth .pts files, or a dataset directory.
        #[arg(long)]
        gt: PathBuf,
        /// Curve label in the plot.
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
