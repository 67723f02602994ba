mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{parse_override, PipelineConfig};
use crate::error::CliError;
use crate::manifest::RunRecorder;

const AFTER_HELP: &str = "\
Configuration is layered: built-in defaults, then the TOML file given with
--config, then VRID_<SECTION>_<KEY> environment variables (for example
VRID_FUSION_TRAIN_EPOCHS=3), then --set KEY=VALUE and the dedicated flags.

Sections and keys:
  [paths]        dataset, frames, labels, output, ocr_checkpoint, model
  [synth]        vehicles_per_camera, covisible_fraction, min_frames, max_frames,
                 clone_pairs, hamming_pairs, illegible_fraction, noise,
                 brightness_jitter, frame_width, frame_height, seed
  [pairs]        max_frames (0 keeps every occurrence)
  [split]        rounds (\"all\" or e.g. \"1,3\")
  [ocr]          sets, max_frames, seed
  [ocr.train]    learning_rate, batch_size, epochs, seed, augment
  [ocr.train.loss] coord, object, no_object, class
  [ocr.decoder]  conf_threshold, nms_iou
  [fusion]       mode (\"two-stream\" | \"shape-only\"), seed
  [fusion.train] learning_rate, batch_size, epochs, seed, augment, max_negative_ratio
  [shape]        wfactor, hfactor, vshift

Every run writes <output>/<command>.manifest.json. Failures print one JSON
line {\"error\": {\"kind\", \"message\"}} on stderr and exit nonzero
(2 for usage errors).";

#[derive(Debug, Parser)]
#[command(name = "vrid", version, about = "Two-camera vehicle re-identification from shape and license plate", after_help = AFTER_HELP)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable), e.g. --set fusion.train.epochs=3.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Dataset directory (paths.dataset).
    #[arg(long, global = true, value_name = "DIR")]
    dataset: Option<String>,
    /// Output directory (paths.output).
    #[arg(long, short, global = true, value_name = "DIR")]
    output: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the ground-truth XML and print per-set counts.
    Ingest,
    /// Generate a synthetic corpus into the dataset directory.
    Synth {
        /// synth.seed
        #[arg(long)]
        seed: Option<u64>,
        /// synth.vehicles_per_camera
        #[arg(long)]
        vehicles: Option<usize>,
        /// synth.clone_pairs
        #[arg(long)]
        clones: Option<usize>,
        /// synth.hamming_pairs
        #[arg(long)]
        hamming: Option<usize>,
        /// Also render PNG frames and character label files.
        #[arg(long)]
        frames: bool,
    },
    /// Write the labeled pair manifest of every set.
    Pairs {
        /// pairs.max_frames
        #[arg(long)]
        max_frames: Option<usize>,
    },
    /// Train the character detector.
    TrainOcr {
        /// ocr.train.epochs
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the two-stream model for one cross-validation round.
    TrainFusion {
        #[arg(long, default_value_t = 1)]
        round: usize,
        /// fusion.mode
        #[arg(long)]
        mode: Option<String>,
        /// fusion.train.epochs
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Cross-validate and write report.csv, report.json and report.png.
    Eval {
        /// split.rounds: `all` or a comma-separated list.
        #[arg(long)]
        rounds: Option<String>,
        /// fusion.mode
        #[arg(long)]
        mode: Option<String>,
    },
    /// Score one pair: two vehicle-rear images and two plate images.
    Match {
        img_a: PathBuf,
        img_b: PathBuf,
        plate_a: PathBuf,
        plate_b: PathBuf,
        /// Use this camera-1 reading instead of the detector: TEXT or TEXT@c1,c2,...
        #[arg(long, value_name = "READING")]
        reading_a: Option<String>,
        /// Use this camera-2 reading instead of the detector.
        #[arg(long, value_name = "READING")]
        reading_b: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Synth { .. } => "synth",
            Command::Pairs { .. } => "pairs",
            Command::TrainOcr { .. } => "train-ocr",
            Command::TrainFusion { .. } => "train-fusion",
            Command::Eval { .. } => "eval",
            Command::Match { .. } => "match",
        }
    }

    /// Dedicated flags expressed as configuration overrides.
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut put = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((key.to_string(), v));
            }
        };
        match self {
            Command::Synth {
                seed,
                vehicles,
                clones,
                hamming,
                ..
            } => {
                put("synth.seed", seed.map(|v| v.to_string()));
                put("synth.vehicles_per_camera", vehicles.map(|v| v.to_string()));
                put("synth.clone_pairs", clones.map(|v| v.to_string()));
                put("synth.hamming_pairs", hamming.map(|v| v.to_string()));
            }
            Command::Pairs { max_frames } => {
                put("pairs.max_frames", max_frames.map(|v| v.to_string()))
            }
            Command::TrainOcr { epochs } => put("ocr.train.epochs", epochs.map(|v| v.to_string())),
            Command::TrainFusion { mode, epochs, .. } => {
                put("fusion.mode", mode.clone());
                put("fusion.train.epochs", epochs.map(|v| v.to_string()));
            }
            Command::Eval { rounds, mode } => {
                put("split.rounds", rounds.clone());
                put("fusion.mode", mode.clone());
            }
            Command::Ingest | Command::Match { .. } => {}
        }
        out
    }
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut overrides = Vec::new();
    if let Some(d) = &cli.dataset {
        overrides.push(("paths.dataset".to_string(), d.clone()));
    }
    if let Some(o) = &cli.output {
        overrides.push(("paths.output".to_string(), o.clone()));
    }
    for s in &cli.overrides {
        overrides.push(parse_override(s)?);
    }
    overrides.extend(cli.command.overrides());
    PipelineConfig::resolve(cli.config.as_deref(), std::env::vars(), &overrides)
}

fn dispatch(cli: &Cli, cfg: &PipelineConfig, rec: &mut RunRecorder) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest => commands::ingest(cfg, rec),
        Command::Synth { frames, .. } => commands::synth(cfg, *frames, rec),
        Command::Pairs { .. } => commands::pairs(cfg, rec),
        Command::TrainOcr { .. } => commands::train_ocr_cmd(cfg, rec),
        Command::TrainFusion { round, .. } => commands::train_fusion(cfg, *round, rec),
        Command::Eval { .. } => commands::eval(cfg, rec),
        Command::Match {
            img_a,
            img_b,
            plate_a,
            plate_b,
            reading_a,
            reading_b,
        } => commands::match_pair(
            cfg,
            &commands::MatchArgs {
                img_a,
                img_b,
                plate_a,
                plate_b,
                reading_a: reading_a.as_deref(),
                reading_b: reading_b.as_deref(),
            },
            rec,
        ),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json_line());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("VRID_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            e.exit()
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .next()
                .unwrap_or(&msg)
                .trim_start_matches("error: ")
                .to_string();
            return fail(&CliError::Usage(first));
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let mut rec = RunRecorder::start(cli.command.name(), &cfg);
    let result = dispatch(&cli, &cfg, &mut rec);
    if let Err(e) = rec.finish(&cfg.paths.output(), &result) {
        log::warn!("could not write run manifest: {e}");
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
