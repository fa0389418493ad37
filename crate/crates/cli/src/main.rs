//! `lane3d-kit`: synthetic scenes, anchor generation, forward passes, losses,
//! benchmark metrics and gradient verification from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 verification failure.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "lane3d-kit", version, about = "Sparse-anchor 3D lane detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Protocol {
    Openlane,
    Once,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ground truth, camera rigs and feature tensors.
    GenScene {
        /// Scene spec JSON; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of frames; frame i uses seed `spec.seed + i`.
        #[arg(long, default_value_t = 1)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate anchor metas and anchors from a level-5 feature map.
    Anchors {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the refinement pipeline on every frame of a scene directory.
    Forward {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-stage anchors and proposals.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Match predictions to ground truth and print the training losses.
    Loss {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long, value_enum, default_value = "openlane")]
        protocol: Protocol,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Only frames carrying this tag.
        #[arg(long)]
        tag_filter: Option<String>,
        /// Write the report JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-frame top-view SVG plots.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Check analytic loss gradients against central finite differences.
    GradCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure forward + evaluate throughput on synthetic frames.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Write a seeded random parameter set.
    InitWeights {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default run configuration.
    DefaultConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenScene { spec, config, frames, out } => commands::gen_scene(spec, config, frames, &out),
        Command::Anchors { config, features, weights, out } => commands::anchors(config, &features, &weights, &out),
        Command::Forward { config, scene, weights, out, trace } => {
            commands::forward(config, &scene, &weights, &out, trace.as_deref())
        }
        Command::Loss { config, gt, pred } => commands::loss(config, &gt, &pred),
        Command::Evaluate { protocol, config, gt, pred, tag_filter, out, plot } => {
            commands::evaluate(protocol, config, &gt, &pred, tag_filter.as_deref(), out.as_deref(), plot.as_deref())
        }
        Command::GradCheck { config, trials, seed } => commands::grad_check(config, trials, seed),
        Command::Bench { config, frames, threads } => commands::bench(config, frames, threads),
        Command::InitWeights { config, seed, out } => commands::init_weights(config, seed, &out),
        Command::DefaultConfig => commands::default_config(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
