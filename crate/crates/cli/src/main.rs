//! `aanet`: generate oscillator data, train models, evaluate and plot.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use aanet_core::ModelKind;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aanet", version, about = "Action-angle networks for integrable Hamiltonian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; every section is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Relative paths resolve against $AANET_RUN_ROOT when set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a coupled-oscillator trajectory from its normal modes.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        num_steps: Option<usize>,
        #[arg(long)]
        time_delta: Option<f64>,
        #[arg(long)]
        k_wall: Option<f64>,
        #[arg(long)]
        k_pair: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        masses: Option<Vec<f64>>,
    },
    /// Train one model on a trajectory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "action-angle")]
        model: ModelKind,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Print the resolved architecture and parameter count, then exit.
        #[arg(long)]
        describe: bool,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Test error against jump length, and optionally against training-set size.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        dt_grid: Option<Vec<f64>>,
        /// Retrain on the first s samples for each value.
        #[arg(long, value_delimiter = ',')]
        samples_grid: Option<Vec<usize>>,
        /// Model kinds retrained for the samples grid.
        #[arg(long, value_delimiter = ',', default_value = "action-angle")]
        models: Vec<ModelKind>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Time single-state predictions across jump lengths.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        dt_grid: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Angular velocities of a trained action-angle network over the test range.
    Freqs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Render SVG figures from the CSV outputs in a run directory.
    Plot {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Args)]
struct TrainOverrides {
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long)]
    split: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    flow_depth: Option<usize>,
    #[arg(long)]
    flow_width: Option<usize>,
    /// Hidden layer widths of the chosen model's networks.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Print a progress line every this many steps (0 disables).
    #[arg(long, default_value_t = 0)]
    progress: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("aanet: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
