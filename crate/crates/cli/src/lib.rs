//! `dynscale` command-line tool: train, predict, evaluate, gradcheck, synth.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dynscale_core::synth::SynthConfig;
use dynscale_core::Architecture;

use crate::commands::{EvaluateArgs, PredictArgs};
use crate::config::ScenePaths;
use crate::error::{CliError, CliResult, Kind};

#[derive(Debug, Parser)]
#[command(name = "dynscale", version, about = "Dynamic multi-scale training of dilated ConvNets for raster segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network from a config file.
    Train {
        config: PathBuf,
        /// Run directory for checkpoints, history and the echoed config.
        #[arg(long, short)]
        out: PathBuf,
        /// Continue from the run directory's checkpoint if present.
        #[arg(long)]
        resume: bool,
    },
    /// Predict class maps for whole scenes.
    Predict {
        #[arg(long)]
        weights: PathBuf,
        /// Score table; its best size is used unless --size is given.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        /// coffee, isprs or distinct.
        #[arg(long)]
        palette: Option<String>,
        /// Defaults to normalizer.txt next to the weights, if present.
        #[arg(long)]
        normalizer: Option<PathBuf>,
        /// Also write per-class probabilities as RSRF.
        #[arg(long)]
        probabilities: bool,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Score predictions against labels.
    Evaluate {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        /// One row per candidate size (from --sizes or the score table).
        #[arg(long)]
        sweep: bool,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// `image:labels`, repeatable.
        #[arg(long = "scene")]
        scenes: Vec<String>,
        /// Predicted label map, paired in order with --labels.
        #[arg(long)]
        predicted: Vec<PathBuf>,
        #[arg(long)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        #[arg(long)]
        normalizer: Option<PathBuf>,
        /// Also write the CSV report here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Finite-difference gradient check of every layer and architecture.
    Gradcheck {
        /// Check one architecture instead of all four.
        #[arg(long)]
        arch: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
    /// Generate a synthetic streak-texture dataset.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        scenes: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Streak length in pixels; patches smaller than this see only part of a streak.
        #[arg(long, default_value_t = 32)]
        scale: usize,
        #[arg(long, default_value_t = 64)]
        cell: usize,
        #[arg(long, default_value_t = 3)]
        bands: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        void_frac: f64,
    },
}

/// Runs one parsed command, returning its stdout text.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Train { config, out, resume } => {
            let s = commands::cmd_train(&config, &out, resume)?;
            let best = s.best_size.map_or("none".to_string(), |b| b.to_string());
            Ok(format!(
                "trained {} steps into {}\nbest_size = {best}\n",
                s.steps,
                s.run_dir.display()
            ))
        }
        Command::Predict {
            weights,
            scores,
            size,
            out,
            overlap,
            palette,
            normalizer,
            probabilities,
            images,
        } => {
            let written = commands::cmd_predict(&PredictArgs {
                weights,
                scores,
                size,
                images,
                out,
                overlap,
                palette,
                normalizer,
                probabilities,
            })?;
            Ok(written.iter().map(|p| format!("wrote {}\n", p.display())).collect())
        }
        Command::Evaluate {
            weights,
            scores,
            size,
            sweep,
            sizes,
            scenes,
            predicted,
            labels,
            classes,
            overlap,
            normalizer,
            out,
        } => {
            let cwd = std::path::Path::new(".");
            let report = commands::cmd_evaluate(&EvaluateArgs {
                weights,
                scores,
                size,
                sweep,
                sizes,
                scenes: scenes.iter().map(|s| ScenePaths::parse(s, cwd)).collect(),
                predicted,
                labels,
                classes,
                overlap,
                normalizer,
            })?;
            if let Some(path) = out {
                std::fs::write(&path, &report).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            }
            Ok(report)
        }
        Command::Gradcheck {
            arch,
            seed,
            corrupt_backward,
        } => {
            let arch = arch
                .map(|a| a.parse::<Architecture>())
                .transpose()
                .map_err(|e| CliError::config(e.to_string()))?;
            let (text, passed) = commands::cmd_gradcheck(arch, seed, corrupt_backward)?;
            if passed {
                Ok(text)
            } else {
                print!("{text}");
                Err(CliError::numeric("gradient check failed"))
            }
        }
        Command::Synth {
            out,
            seed,
            scenes,
            size,
            scale,
            cell,
            bands,
            classes,
            noise,
            void_frac,
        } => {
            let cfg = SynthConfig {
                size,
                bands,
                classes,
                scale,
                cell,
                noise,
                void_frac,
            };
            let manifest = commands::cmd_synth(&out, &cfg, seed, scenes)?;
            Ok(format!("wrote {} scenes; manifest {}\n", scenes, manifest.display()))
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let err = CliError::new(Kind::Usage, first.trim_start_matches("error: "));
            eprintln!("{}", err.line());
            return err.kind.exit_code();
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.kind.exit_code()
        }
    }
}
