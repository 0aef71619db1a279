//! `hallglove`: generate, train, evaluate, export, simulate, infer, serve.

mod commands;
mod config;
mod output;
mod stream;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Resolved;

#[derive(Parser)]
#[command(name = "hallglove", version, about = "Hall-effect sign-language glove toolkit")]
struct Cli {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary output path of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSplit {
    /// Validation half of the training split.
    Val,
    /// Every record.
    All,
    /// Accuracy per subject.
    Loso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsFormat {
    Binary,
    Firmware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Collect,
    Infer,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-subject dataset (CSV).
    Gen,
    /// Train the classifier and export its weights.
    Train {
        dataset: PathBuf,
        /// Validate on this subject only, train on the rest.
        #[arg(long)]
        holdout: Option<String>,
    },
    /// Score weights against a dataset.
    Eval {
        dataset: PathBuf,
        weights: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalSplit::Val)]
        split: EvalSplit,
        /// With --split val: the subject held out during training.
        #[arg(long)]
        holdout: Option<String>,
    },
    /// Convert weights between the binary and firmware-array forms.
    Export {
        weights: PathBuf,
        /// Output form; inferred from the --out extension when omitted.
        #[arg(long, value_enum)]
        to: Option<WeightsFormat>,
    },
    /// Run the simulated glove over a pose script and emit wire frames.
    Simulate {
        script: PathBuf,
        #[arg(long, value_enum, default_value_t = SimMode::Collect)]
        mode: SimMode,
        /// Weights for on-glove inference (required with --mode infer).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Hold the configured sample rate in wall-clock time.
        #[arg(long)]
        realtime: bool,
        /// Serve the stream to the first client connecting to this address.
        #[arg(long)]
        listen: Option<String>,
        /// Simulate a failed IMU self-test at boot.
        #[arg(long)]
        imu_fault: bool,
    },
    /// Turn a wire-frame stream into debounced words.
    Infer {
        weights: PathBuf,
        #[arg(long)]
        wordmap: Option<PathBuf>,
        /// Read frames from a file instead of standard input.
        #[arg(long, conflicts_with = "connect")]
        input: Option<PathBuf>,
        /// Read frames from a TCP address.
        #[arg(long)]
        connect: Option<String>,
        #[arg(long)]
        debounce: Option<usize>,
    },
    /// Interactive JSON-lines session endpoint for the UI.
    Serve {
        weights: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        #[arg(long)]
        wordmap: Option<PathBuf>,
        /// Keep recorded samples in this CSV (rewritten after every record).
        #[arg(long)]
        record_out: Option<PathBuf>,
        /// Exit after the first session ends.
        #[arg(long)]
        once: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = Resolved::load(cli.config.as_deref(), cli.seed)?;
    let out = cli.out.as_deref();
    let fmt = cli.format;
    match cli.command {
        Command::Gen => commands::gen(&cfg, out, fmt),
        Command::Train { dataset, holdout } => {
            commands::train(&cfg, &dataset, holdout.as_deref(), out, fmt)
        }
        Command::Eval {
            dataset,
            weights,
            split,
            holdout,
        } => commands::eval(&cfg, &dataset, &weights, split, holdout.as_deref(), out, fmt),
        Command::Export { weights, to } => commands::export(&cfg, &weights, to, out, fmt),
        Command::Simulate {
            script,
            mode,
            weights,
            realtime,
            listen,
            imu_fault,
        } => stream::simulate(
            &cfg,
            &stream::SimulateArgs {
                script,
                mode,
                weights,
                realtime,
                listen,
                imu_fault,
            },
            out,
            fmt,
        ),
        Command::Infer {
            weights,
            wordmap,
            input,
            connect,
            debounce,
        } => stream::infer(
            &cfg,
            &stream::InferArgs {
                weights,
                wordmap,
                input,
                connect,
                debounce,
            },
            out,
            fmt,
        ),
        Command::Serve {
            weights,
            bind,
            wordmap,
            record_out,
            once,
        } => stream::serve(&cfg, &weights, &bind, wordmap.as_deref(), record_out, once),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
