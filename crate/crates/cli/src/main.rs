//! `mtgd`: spectral estimation, ensemble statistics and speaker verification
//! experiments from the command line.
//!
//! Any configuration key can be overridden as `--section.key=value`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtgd::experiment::ExperimentConfig;
use mtgd::spectral::EstimatorKind;

#[derive(Debug, Parser)]
#[command(name = "mtgd", version, about = "Multitaper group-delay spectral analysis toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw (required here or in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus (audio, .PHN alignments, corpus.json).
    GenCorpus,
    /// Generate the configured taper set.
    Tapers {
        /// Taper length in samples; defaults to one frame.
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
    },
    /// Spectral estimates of the frames of one audio file.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        estimator: Option<EstimatorKind>,
        /// Only this frame, written with its bin frequencies.
        #[arg(long)]
        frame: Option<usize>,
    },
    /// Bias/variance/MSE reports over phone ensembles.
    Ensemble,
    /// Mel-cepstral features of one file or of the whole corpus.
    Features {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        feature: Option<EstimatorKind>,
    },
    /// Train a background model on the enrolment data.
    TrainUbm {
        #[arg(long)]
        feature: Option<EstimatorKind>,
        /// Speakers in the protocol; defaults to the largest configured count.
        #[arg(long)]
        speakers: Option<usize>,
    },
    /// MAP-adapt one model per speaker from a background model.
    Enroll {
        #[arg(long)]
        ubm: Option<PathBuf>,
    },
    /// Score a trial list against enrolled models.
    Score {
        #[arg(long)]
        ubm: Option<PathBuf>,
        #[arg(long)]
        trials: Option<PathBuf>,
    },
    /// EER and minimum DCF of a score file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
    },
    /// Full recognition sweep written as a results table.
    Report,
}

/// Split `--a.b=value` overrides from the arguments clap should see.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match a.strip_prefix("--").and_then(|s| s.split_once('=')) {
            Some((k, v)) if k.contains('.') => overrides.push((k.to_string(), v.to_string())),
            _ => rest.push(a),
        }
    }
    (rest, overrides)
}

fn load_config(common: &Common, mut overrides: Vec<(String, String)>) -> mtgd::Result<ExperimentConfig> {
    if let Some(s) = common.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(w) = common.workers {
        overrides.push(("workers".into(), w.to_string()));
    }
    let mut cfg = ExperimentConfig::load(common.config.as_deref(), &overrides)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result = load_config(&cli.common, overrides).and_then(|cfg| commands::run(&cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
