//! Checkpoint files: training configuration, centroid, category
//! vocabulary, every generator and discriminator parameter and the loss
//! history, stored in an [`Archive`]. Optimizer state is not kept.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Discriminator, EpochLosses, Generator, TrainingConfig, TrajGanError};
use crate::archive::{restore_parameters, Archive, ArchiveError};
use crate::neural::{Parameterized, Tensor};

const MAGIC: &[u8; 8] = b"TRJSHLD\0";
const VERSION: u32 = 1;
const HISTORY: &str = "history";

/// Everything needed to resume generation from a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainingConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub centroid: (f64, f64),
    pub vocabulary: Vec<String>,
    pub epoch: usize,
    pub history: Vec<EpochLosses>,
    /// Free-form provenance, e.g. how the training split was drawn.
    pub metadata: BTreeMap<String, String>,
}

fn to_archive(ckpt: &Checkpoint) -> Result<Archive, TrajGanError> {
    let mut a = Archive::default();
    for (k, v) in ckpt.config.to_pairs() {
        a.insert(format!("config.{k}"), v);
    }
    let (s_lat, s_lon) = ckpt.generator.stretch;
    a.insert("centroid", format!("{},{}", ckpt.centroid.0, ckpt.centroid.1));
    a.insert("stretch", format!("{s_lat},{s_lon}"));
    a.insert("epoch", ckpt.epoch);
    a.insert("vocab.count", ckpt.vocabulary.len());
    for (i, name) in ckpt.vocabulary.iter().enumerate() {
        a.insert(format!("vocab.{i}"), name);
    }
    for (k, v) in &ckpt.metadata {
        a.insert(format!("meta.{k}"), v);
    }
    let params = ckpt.generator.parameters().into_iter().chain(ckpt.discriminator.parameters());
    a.tensors = params.map(|p| (p.name().to_string(), p.value.clone())).collect();
    let rows: Vec<f64> = ckpt.history.iter().flat_map(|h| h.to_row()).collect();
    let history = Tensor::matrix(ckpt.history.len(), EpochLosses::COLUMNS.len(), rows)?;
    a.tensors.push((HISTORY.to_string(), history));
    Ok(a)
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, w: W) -> Result<(), TrajGanError> {
    Ok(to_archive(ckpt)?.write(MAGIC, VERSION, w)?)
}

pub fn checkpoint_save(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), TrajGanError> {
    fs::write(path, to_archive(ckpt)?.to_bytes(MAGIC, VERSION))?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint, TrajGanError> {
    let mut a = Archive::read(MAGIC, VERSION, "checkpoint", r)?;
    let keys: Vec<String> = TrainingConfig::KEYS.iter().map(|k| format!("config.{k}")).collect();
    let pairs: Vec<(&str, &str)> = TrainingConfig::KEYS
        .iter()
        .zip(&keys)
        .map(|(k, full)| Ok((*k, a.get(full)?)))
        .collect::<Result<_, ArchiveError>>()?;
    let config = TrainingConfig::from_pairs(pairs)?;
    let centroid = a.pair("centroid")?;
    let stretch = a.pair("stretch")?;
    let epoch = a.parse("epoch")?;
    let count: usize = a.parse("vocab.count")?;
    let vocabulary = (0..count)
        .map(|i| a.get(&format!("vocab.{i}")).map(String::from))
        .collect::<Result<Vec<_>, _>>()?;
    let metadata = a
        .header
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone())))
        .collect();

    // rebuild the architecture, then overwrite every parameter
    let mut tensors = a.take_tensors()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = vocabulary.len();
    let mut generator = Generator::new(c, config.spatial_embed, config.noise_dim, config.units, stretch, &mut rng);
    let mut discriminator = Discriminator::new(c, config.spatial_embed, config.units, &mut rng);
    restore_parameters(
        generator.parameters_mut().into_iter().chain(discriminator.parameters_mut()),
        &mut tensors,
    )?;
    let hist = tensors
        .remove(HISTORY)
        .ok_or_else(|| ArchiveError::Corrupt("missing loss history".into()))?;
    if hist.cols() != EpochLosses::COLUMNS.len() && !hist.is_empty() {
        return Err(ArchiveError::Corrupt("loss history has the wrong width".into()).into());
    }
    let history = (0..hist.rows()).map(|r| EpochLosses::from_row(hist.row(r))).collect();
    if let Some(name) = tensors.keys().next() {
        return Err(ArchiveError::Corrupt(format!("unexpected tensor `{name}`")).into());
    }
    Ok(Checkpoint {
        config,
        generator,
        discriminator,
        centroid,
        vocabulary,
        epoch,
        history,
        metadata,
    })
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<Checkpoint, TrajGanError> {
    read_checkpoint(fs::File::open(path)?)
}
