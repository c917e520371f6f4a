//! The adversarial trajectory generator: generator and discriminator
//! networks, the composite generator loss, the training loop, synthetic
//! generation and checkpoint files.

mod checkpoint;
mod loss;
mod model;
mod train;

use std::fmt;
use std::str::FromStr;

pub use checkpoint::{checkpoint_load, checkpoint_save, read_checkpoint, write_checkpoint, Checkpoint};
pub use loss::{traj_loss, traj_loss_with_grad, LossWeights, TrajLossTerms};
pub use model::{BatchGrad, Discriminator, DiscriminatorTape, FrontEnd, FrontTape, Generator, GeneratorTape};
pub use train::{
    discriminator_step, generate_synthetic, generate_with_model, generator_step, history_csv,
    sample_noise, train_gan, train_gan_on, trajectory_noise, EpochLosses,
};

use crate::archive::ArchiveError;
use crate::encoding::EncodingError;
use crate::neural::NeuralError;

#[derive(Debug, thiserror::Error)]
pub enum TrajGanError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no trajectories to train on")]
    EmptyTrainingSet,
    #[error("non-finite {what} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("category vocabulary mismatch: checkpoint has {expected} categories, dataset has {found}")]
    VocabularyMismatch { expected: usize, found: usize },
    #[error("checkpoint: {0}")]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How generator noise is laid out across a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// A fresh draw for every real slot.
    #[default]
    PerSlot,
    /// One draw per trajectory, repeated at every real slot.
    PerTrajectory,
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::PerSlot => "per-slot",
            NoiseMode::PerTrajectory => "per-trajectory",
        })
    }
}

impl FromStr for NoiseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-slot" => Ok(NoiseMode::PerSlot),
            "per-trajectory" => Ok(NoiseMode::PerTrajectory),
            _ => Err(format!("unknown noise mode `{s}` (expected per-slot or per-trajectory)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub noise_dim: usize,
    pub noise_mode: NoiseMode,
    /// Width of the spatial embedding.
    pub spatial_embed: usize,
    /// Fusion width and LSTM units of both networks.
    pub units: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            epochs: 2000,
            batch_size: 256,
            weights: LossWeights::default(),
            noise_dim: 28,
            noise_mode: NoiseMode::PerSlot,
            spatial_embed: 64,
            units: 100,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub const KEYS: [&'static str; 12] = [
        "lr",
        "epochs",
        "batch_size",
        "alpha",
        "beta",
        "gamma",
        "c",
        "noise_dim",
        "noise_mode",
        "spatial_embed",
        "units",
        "seed",
    ];

    pub fn validate(&self) -> Result<(), TrajGanError> {
        let err = |m: String| Err(TrajGanError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return err(format!("learning rate {} must be positive", self.lr));
        }
        if self.batch_size == 0 || self.units == 0 || self.spatial_embed == 0 {
            return err("batch_size, units and spatial_embed must be positive".into());
        }
        self.weights.validate().map_err(TrajGanError::Config)
    }

    /// Sets one option from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrajGanError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, TrajGanError> {
            value
                .trim()
                .parse()
                .map_err(|_| TrajGanError::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "alpha" => self.weights.alpha = parse(key, value)?,
            "beta" => self.weights.beta = parse(key, value)?,
            "gamma" => self.weights.gamma = parse(key, value)?,
            "c" => self.weights.c = parse(key, value)?,
            "noise_dim" => self.noise_dim = parse(key, value)?,
            "noise_mode" => self.noise_mode = value.trim().parse().map_err(TrajGanError::Config)?,
            "spatial_embed" => self.spatial_embed = parse(key, value)?,
            "units" => self.units = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(TrajGanError::Config(format!("unknown training option `{key}`"))),
        }
        Ok(())
    }

    /// Every option as `(key, value)` text, in [`Self::KEYS`] order. Floats
    /// use Rust's shortest round-trip formatting.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let w = &self.weights;
        let values = [
            self.lr.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            w.alpha.to_string(),
            w.beta.to_string(),
            w.gamma.to_string(),
            w.c.to_string(),
            self.noise_dim.to_string(),
            self.noise_mode.to_string(),
            self.spatial_embed.to_string(),
            self.units.to_string(),
            self.seed.to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, TrajGanError> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}
