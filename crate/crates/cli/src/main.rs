//! `kws`: drives the keyword spotting pipeline one stage at a time.

mod commands;
mod config;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Data(#[from] kws_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::MissingInput(_) => 2,
            CliError::Data(kws_core::Error::Nn(_)) => 3,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.into())
            }
        })*
    };
}

data_errors!(
    kws_core::corpus::CorpusError,
    kws_core::features::FeatureError,
    kws_core::sae::SaeError,
    kws_core::dtw::DtwError,
    kws_core::nn::NnError,
    kws_core::spotter::SpotterError,
    kws_core::eval::EvalError,
    std::io::Error
);

#[derive(Debug, Parser)]
#[command(
    name = "kws",
    version,
    about = "Exemplar-based keyword spotting: DTW search, CNN distillation and evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Run configuration file (TOML, flat keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set seed=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads (overrides the `threads` key).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus (features, manifest, keywords, ground truth).
    GenSynth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute MFCCs for the wav files of a manifest.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        /// Only this split (train, dev or test).
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the stacked denoising autoencoder on feature archives.
    TrainSae {
        #[arg(long = "features", required = true)]
        features: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace every matrix of an archive by its autoencoder features.
    EncodeSae {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Import an externally computed feature archive (e.g. bottleneck features).
    ImportFeatures {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every (utterance, keyword) pair with subsequence DTW.
    DtwSearch {
        #[arg(long)]
        keywords: PathBuf,
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long)]
        utterances: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a DTW cost table into soft targets.
    MakeTargets {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the sliding-window CNN classifier.
    TrainClassifier {
        #[arg(long)]
        keywords: PathBuf,
        #[arg(long)]
        exemplars: PathBuf,
        /// Utterances from which background windows are drawn.
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the CNN on DTW soft targets.
    TrainCnnDtw {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score utterances with a trained CNN-DTW or classifier checkpoint.
    Spot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare score tables against the labels of a manifest.
    Evaluate {
        /// `system=path` pairs. Repeatable.
        #[arg(long = "scores", value_name = "SYSTEM=PATH", required = true)]
        scores: Vec<String>,
        /// Manifest whose transcribed entries give the labels.
        #[arg(long)]
        manifest: PathBuf,
        /// Feature name written to the report.
        #[arg(long, default_value = "mfcc39")]
        feature_name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time DTW search against CNN-DTW spotting on the same utterances.
    Bench {
        #[arg(long)]
        keywords: PathBuf,
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long)]
        utterances: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kws: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
