//! `orgseg` command-line tool.
//!
//! Exit codes: 0 success, 2 usage error, 3 unreadable input, 4 inputs that
//! parse but disagree (dims, spacing, model shape), 1 failure writing output.

mod commands;
mod inputs;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use orgseg::dataset::SampleSpec;
use orgseg::model::ModelConfig;
use orgseg::sampler::DESCRIPTOR_DIM;
use orgseg::segmenter::DEFAULT_MAJORITY;

use commands::{Classifier, ExtractArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] orgseg::Error),
    #[error("cannot write {0}: {1}")]
    Output(String, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_parse_error() => 3,
            CliError::Core(_) => 4,
            CliError::Output(..) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "orgseg", version, about = "Point-descriptor organ classification and coarse-to-fine segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify one voxel and report class probabilities.
    Classify {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Voxel index, `i,j,k` or `i j k`.
        #[arg(long, num_args = 1..=3, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        point: Vec<i64>,
    },
    /// Time extract + forward over random in-volume points.
    Bench {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Ground-truth mask; adds accuracy and macro-F1.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Coarse-to-fine segmentation of a whole volume.
    #[command(group(ArgGroup::new("classifier").required(true).args(["weights", "oracle"])))]
    Segment {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Read labels from this ground-truth mask instead of running a model.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Grid spacings in mm, strictly decreasing.
        #[arg(long, value_delimiter = ',', default_value = "8,4,2")]
        levels: Vec<f32>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MAJORITY)]
        majority: usize,
        /// Output ORGM mask.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample points and write their descriptors as an ORGD dataset.
    Extract {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Defaults to the volume file name up to the first dot.
        #[arg(long)]
        volume_id: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value_t = 0.10)]
        balanced: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render the descriptor at a voxel as an 81x81 PGM.
    Decode {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, num_args = 1..=3, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        point: Vec<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted mask against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a synthetic phantom volume and its label mask.
    Synth {
        /// sphere, nested_spheres or two_boxes
        #[arg(long)]
        phantom: String,
        #[arg(long)]
        out_volume: PathBuf,
        #[arg(long)]
        out_mask: PathBuf,
    },
    /// Write an untrained weight file.
    InitWeights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// All-zero weights instead of seeded random ones.
        #[arg(long)]
        zero: bool,
        #[arg(long, default_value_t = DESCRIPTOR_DIM)]
        input_dim: usize,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 14)]
        classes: usize,
    },
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Classify { volume, weights, point } => commands::classify(&volume, &weights, &point),
        Command::Bench { volume, weights, mask, n, seed } => {
            commands::bench(&volume, &weights, mask.as_deref(), n, seed)
        }
        Command::Segment { volume, weights, oracle, levels, threads, majority, out } => {
            let classifier = match (&weights, &oracle) {
                (Some(w), None) => Classifier::Weights(w),
                (None, Some(m)) => Classifier::Oracle(m),
                _ => unreachable!("clap enforces exactly one classifier"),
            };
            commands::segment_cmd(&volume, classifier, &levels, threads, majority, &out)
        }
        Command::Extract { volume, mask, out, manifest, volume_id, count, balanced, seed } => {
            commands::extract(ExtractArgs {
                volume: &volume,
                mask: &mask,
                out: &out,
                manifest: manifest.as_deref(),
                volume_id: volume_id.as_deref(),
                spec: SampleSpec { per_image_count: count, balanced_fraction: balanced, seed },
            })
        }
        Command::Decode { volume, point, out } => commands::decode(&volume, &point, &out),
        Command::Eval { pred, truth, csv } => commands::eval(&pred, &truth, csv.as_deref()),
        Command::Synth { phantom, out_volume, out_mask } => commands::synth(&phantom, &out_volume, &out_mask),
        Command::InitWeights { out, seed, zero, input_dim, hidden, blocks, classes } => {
            let config = ModelConfig { input_dim, hidden_dim: hidden, num_blocks: blocks, num_classes: classes };
            commands::init_weights(config, zero, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("orgseg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
