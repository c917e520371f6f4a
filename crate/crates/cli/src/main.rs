//! `trajshield` command-line tool.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, configuration or input paths (exit code 2).
    #[error("{0}")]
    Usage(String),
    /// Anything that went wrong while running (exit code 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        })*
    };
}

runtime_from!(
    std::io::Error,
    serde_json::Error,
    trajshield::data::DataError,
    trajshield::eval::EvalError,
    trajshield::geomask::MaskError,
    trajshield::trajgan::TrajGanError
);

#[derive(Debug, Parser)]
#[command(name = "trajshield", version, about = "Synthetic trajectory generation, geomasking and privacy evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Test => "test",
            SplitArg::All => "all",
        }
    }
}

/// Input dataset and how it is split into train and test trajectories.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Trajectory CSV (columns tid,uid,lat,lon,day,hour,category[,seq])
    #[arg(long)]
    data: PathBuf,
    /// Category vocabulary file, one name per line
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Flat `key = value` settings file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the train/test shuffle [default: 1]
    #[arg(long)]
    split_seed: Option<u64>,
    /// Fraction of trajectories used for training [default: 2/3]
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TulArgs {
    #[arg(long)]
    tul_epochs: Option<usize>,
    #[arg(long)]
    tul_lr: Option<f64>,
    #[arg(long)]
    tul_batch_size: Option<usize>,
    #[arg(long)]
    tul_units: Option<usize>,
    #[arg(long)]
    tul_spatial_embed: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a dataset and print its summary
    IngestCheck {
        #[command(flatten)]
        data: DataArgs,
        /// Also write the summary JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the trajectory GAN on the training split
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint path; history and manifest are written next to it
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// alpha,beta,gamma,c
        #[arg(long)]
        loss_weights: Option<String>,
        #[arg(long)]
        noise_dim: Option<usize>,
        /// per-slot or per-trajectory
        #[arg(long)]
        noise_mode: Option<String>,
        #[arg(long)]
        spatial_embed: Option<usize>,
        #[arg(long)]
        units: Option<usize>,
    },
    /// Generate one synthetic trajectory per real one from a checkpoint
    Generate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Seed of the generator noise [default: 0]
        #[arg(long)]
        noise_seed: Option<u64>,
    },
    /// Apply a geomasking baseline
    Mask {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// rp (random perturbation) or gaussian
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        radius_km: Option<f64>,
        #[arg(long)]
        sigma_deg: Option<f64>,
        /// Also shift visit times within the temporal window
        #[arg(long)]
        temporal: bool,
        #[arg(long)]
        temporal_window_h: Option<u32>,
    },
    /// Train the trajectory-user linking classifier on the training split
    TulTrain {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        tul: TulArgs,
    },
    /// Compare candidate trajectories against the originals
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Candidate CSV, optionally named as NAME=PATH; repeatable
        #[arg(long, required = true)]
        candidate: Vec<String>,
        /// Pre-trained linking model; trained from the training split if absent
        #[arg(long)]
        tul: Option<PathBuf>,
        /// Report JSON; a comparison CSV and manifest are written next to it
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        tul_args: TulArgs,
    },
    /// Turn evaluation reports into tables and plot-ready data series
    Report {
        /// Report JSON files written by `evaluate`
        #[arg(long, required = true)]
        reports: Vec<PathBuf>,
        /// Category vocabulary used to label matrix rows
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("TRAJSHIELD_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("TRAJSHIELD_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::IngestCheck { data, out } => commands::ingest_check(&data, out.as_deref()),
        Command::Train {
            data,
            out,
            seed,
            epochs,
            lr,
            batch_size,
            loss_weights,
            noise_dim,
            noise_mode,
            spatial_embed,
            units,
        } => {
            let flags = [
                ("seed", seed.map(|v| v.to_string())),
                ("epochs", epochs.map(|v| v.to_string())),
                ("lr", lr.map(|v| v.to_string())),
                ("batch_size", batch_size.map(|v| v.to_string())),
                ("loss_weights", loss_weights),
                ("noise_dim", noise_dim.map(|v| v.to_string())),
                ("noise_mode", noise_mode),
                ("spatial_embed", spatial_embed.map(|v| v.to_string())),
                ("units", units.map(|v| v.to_string())),
            ];
            commands::train(&data, &out, &flags)
        }
        Command::Generate {
            data,
            checkpoint,
            out,
            split,
            noise_seed,
        } => {
            let flags = [
                ("split", split.map(|s| s.name().to_string())),
                ("noise_seed", noise_seed.map(|v| v.to_string())),
            ];
            commands::generate(&data, &checkpoint, &out, &flags)
        }
        Command::Mask {
            data,
            out,
            split,
            seed,
            method,
            radius_km,
            sigma_deg,
            temporal,
            temporal_window_h,
        } => {
            let flags = [
                ("split", split.map(|s| s.name().to_string())),
                ("seed", seed.map(|v| v.to_string())),
                ("method", method),
                ("radius_km", radius_km.map(|v| v.to_string())),
                ("sigma_deg", sigma_deg.map(|v| v.to_string())),
                ("temporal", temporal.then(|| "true".to_string())),
                ("temporal_window_h", temporal_window_h.map(|v| v.to_string())),
            ];
            commands::mask(&data, &out, &flags)
        }
        Command::TulTrain { data, out, seed, tul } => {
            let mut flags = tul_flags(tul);
            flags.push(("seed", seed.map(|v| v.to_string())));
            commands::tul_train(&data, &out, &flags)
        }
        Command::Evaluate {
            data,
            candidate,
            tul,
            out,
            split,
            seed,
            tul_args,
        } => {
            let mut flags = tul_flags(tul_args);
            flags.push(("seed", seed.map(|v| v.to_string())));
            flags.push(("split", split.map(|s| s.name().to_string())));
            commands::evaluate(&data, &candidate, tul.as_deref(), &out, &flags)
        }
        Command::Report { reports, vocab, out } => commands::report(&reports, vocab.as_deref(), &out),
    }
}

fn tul_flags(t: TulArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("tul_epochs", t.tul_epochs.map(|v| v.to_string())),
        ("tul_lr", t.tul_lr.map(|v| v.to_string())),
        ("tul_batch_size", t.tul_batch_size.map(|v| v.to_string())),
        ("tul_units", t.tul_units.map(|v| v.to_string())),
        ("tul_spatial_embed", t.tul_spatial_embed.map(|v| v.to_string())),
    ]
}

fn main() -> ExitCode {
    // clap exits with code 2 on its own usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
