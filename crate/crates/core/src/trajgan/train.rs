use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    traj_loss_with_grad, Checkpoint, Discriminator, Generator, LossWeights, NoiseMode, TrainingConfig,
    TrajGanError, TrajLossTerms,
};
use crate::data::{Dataset, Split, Trajectory};
use crate::encoding::{decode_trajectory, EncodedBatch};
use crate::neural::{adam_step, bce_with_grad, AdamConfig, Parameterized, Tensor};

/// Mean losses over the batches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub terms: TrajLossTerms,
}

impl EpochLosses {
    pub const COLUMNS: [&'static str; 8] = ["epoch", "d_loss", "g_loss", "bce", "l2", "sce_day", "sce_hour", "sce_cat"];

    pub fn to_row(&self) -> [f64; 8] {
        let t = &self.terms;
        [
            self.epoch as f64,
            self.d_loss,
            self.g_loss,
            t.bce,
            t.l2,
            t.sce_day,
            t.sce_hour,
            t.sce_cat,
        ]
    }

    pub fn from_row(row: &[f64]) -> Self {
        Self {
            epoch: row[0] as usize,
            d_loss: row[1],
            g_loss: row[2],
            terms: TrajLossTerms {
                bce: row[3],
                l2: row[4],
                sce_day: row[5],
                sce_hour: row[6],
                sce_cat: row[7],
                total: row[2],
            },
        }
    }
}

/// Loss history as CSV text.
pub fn history_csv(history: &[EpochLosses]) -> String {
    let mut out = EpochLosses::COLUMNS.join(",");
    out.push('\n');
    for h in history {
        let row = h.to_row();
        let _ = write!(out, "{}", h.epoch);
        for v in &row[1..] {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn fill_item_noise<R: Rng + ?Sized>(z: &mut Tensor, batch: &EncodedBatch, b: usize, mode: NoiseMode, rng: &mut R) {
    let dim = z.cols();
    let shared: Vec<f64> = match mode {
        NoiseMode::PerTrajectory => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
        NoiseMode::PerSlot => Vec::new(),
    };
    for t in 0..batch.steps {
        let r = batch.row_index(t, b);
        if batch.mask[r] == 0.0 {
            continue;
        }
        let row = z.row_mut(r);
        match mode {
            NoiseMode::PerSlot => row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            NoiseMode::PerTrajectory => row.copy_from_slice(&shared),
        }
    }
}

/// Standard normal noise for the real slots of `batch`, zero at padding,
/// drawn item by item from one stream.
pub fn sample_noise<R: Rng + ?Sized>(batch: &EncodedBatch, dim: usize, mode: NoiseMode, rng: &mut R) -> Tensor {
    let mut z = Tensor::zeros(&[batch.rows(), dim]);
    for b in 0..batch.batch {
        fill_item_noise(&mut z, batch, b, mode, rng);
    }
    z
}

/// Like [`sample_noise`], but every trajectory draws from its own stream
/// keyed by `(seed, tid)`, so its noise does not depend on batching.
pub fn trajectory_noise(batch: &EncodedBatch, dim: usize, mode: NoiseMode, seed: u64) -> Tensor {
    let mut z = Tensor::zeros(&[batch.rows(), dim]);
    for b in 0..batch.batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(batch.tids[b]);
        fill_item_noise(&mut z, batch, b, mode, &mut rng);
    }
    z
}

/// One discriminator update: real rows labelled 1, synthetic rows labelled 0.
/// Returns the BCE before the update.
pub fn discriminator_step(
    d: &mut Discriminator,
    real: &EncodedBatch,
    fake: &EncodedBatch,
    adam: &AdamConfig,
) -> Result<f64, TrajGanError> {
    d.zero_grad();
    let (p_real, tape_real) = d.forward(real)?;
    let (p_fake, tape_fake) = d.forward(fake)?;
    let n = p_real.len();
    let mut labels = vec![1.0; n];
    labels.resize(n + p_fake.len(), 0.0);
    let preds: Vec<f64> = p_real.iter().chain(&p_fake).copied().collect();
    let loss = bce_with_grad(&labels, &preds)?;
    let (g_real, g_fake) = loss.grad.data().split_at(n);
    d.backward(&tape_real, g_real, true, false)?;
    d.backward(&tape_fake, g_fake, true, false)?;
    if loss.value.is_finite() {
        adam_step(d, adam)?;
    }
    Ok(loss.value)
}

/// One generator update against the current discriminator, reusing the
/// synthetic batch `fake` produced with `tape`.
pub fn generator_step(
    g: &mut Generator,
    d: &mut Discriminator,
    tape: &super::GeneratorTape,
    real: &EncodedBatch,
    fake: &EncodedBatch,
    weights: &LossWeights,
    adam: &AdamConfig,
) -> Result<TrajLossTerms, TrajGanError> {
    g.zero_grad();
    let (p_fake, d_tape) = d.forward(fake)?;
    let y_r = vec![1.0; p_fake.len()];
    let (terms, d_p, mut grad) = traj_loss_with_grad(&y_r, &p_fake, real, fake, weights)?;
    if weights.alpha != 0.0 {
        let through_d = d.backward(&d_tape, &d_p, false, true)?.expect("input gradient");
        grad.accumulate(&through_d);
    }
    g.backward(tape, &grad);
    if terms.total.is_finite() {
        adam_step(g, adam)?;
    }
    Ok(terms)
}

fn stretch_of(trajectories: &[Trajectory], centroid: (f64, f64)) -> (f64, f64) {
    let mut s = (0.0f64, 0.0f64);
    for p in trajectories.iter().flat_map(|t| &t.points) {
        s.0 = s.0.max((p.lat - centroid.0).abs());
        s.1 = s.1.max((p.lon - centroid.1).abs());
    }
    // a degenerate corpus still needs a usable output range
    (s.0.max(1e-9), s.1.max(1e-9))
}

/// Trains on the training split of `ds`.
pub fn train_gan(ds: &Dataset, cfg: &TrainingConfig) -> Result<Checkpoint, TrajGanError> {
    let train = ds.split_trajectories(Split::Train);
    train_gan_on(&train, ds.category_vocab(), ds.centroid(), cfg)
}

pub fn train_gan_on(
    train: &[Trajectory],
    vocabulary: &[String],
    centroid: (f64, f64),
    cfg: &TrainingConfig,
) -> Result<Checkpoint, TrajGanError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrajGanError::EmptyTrainingSet);
    }
    let categories = vocabulary.len();
    let stretch = stretch_of(train, centroid);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = Generator::new(categories, cfg.spatial_embed, cfg.noise_dim, cfg.units, stretch, &mut rng);
    let mut d = Discriminator::new(categories, cfg.spatial_embed, cfg.units, &mut rng);
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = EpochLosses {
            epoch,
            d_loss: 0.0,
            g_loss: 0.0,
            terms: TrajLossTerms::default(),
        };
        let mut batches = 0;
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<&Trajectory> = chunk.iter().map(|&i| &train[i]).collect();
            let real = EncodedBatch::from_trajectories(&items, centroid, categories, 0)?;
            let noise = sample_noise(&real, cfg.noise_dim, cfg.noise_mode, &mut rng);
            let (fake, tape) = g.forward(&real, &noise)?;
            let d_loss = discriminator_step(&mut d, &real, &fake, &adam)?;
            let non_finite = |what| TrajGanError::NonFiniteLoss {
                what,
                epoch,
                batch: batch_index,
            };
            if !d_loss.is_finite() {
                return Err(non_finite("discriminator"));
            }
            let t = generator_step(&mut g, &mut d, &tape, &real, &fake, &cfg.weights, &adam)?;
            if !t.total.is_finite() {
                return Err(non_finite("generator"));
            }
            sum.d_loss += d_loss;
            sum.g_loss += t.total;
            let s = &mut sum.terms;
            s.bce += t.bce;
            s.l2 += t.l2;
            s.sce_day += t.sce_day;
            s.sce_hour += t.sce_hour;
            s.sce_cat += t.sce_cat;
            s.total += t.total;
            batches += 1;
        }
        let k = batches as f64;
        let s = &mut sum.terms;
        for v in [&mut sum.d_loss, &mut sum.g_loss, &mut s.bce, &mut s.l2, &mut s.sce_day, &mut s.sce_hour, &mut s.sce_cat, &mut s.total] {
            *v /= k;
        }
        history.push(sum);
    }
    Ok(Checkpoint {
        config: cfg.clone(),
        generator: g,
        discriminator: d,
        centroid,
        vocabulary: vocabulary.to_vec(),
        epoch: cfg.epochs,
        history,
        metadata: BTreeMap::new(),
    })
}

/// One synthetic trajectory per input, with the same tid, uid and length.
pub fn generate_synthetic(
    trajectories: &[Trajectory],
    ckpt: &Checkpoint,
    vocabulary: &[String],
    noise_seed: u64,
) -> Result<Vec<Trajectory>, TrajGanError> {
    if ckpt.vocabulary != vocabulary {
        return Err(TrajGanError::VocabularyMismatch {
            expected: ckpt.vocabulary.len(),
            found: vocabulary.len(),
        });
    }
    generate_with_model(
        &ckpt.generator,
        trajectories,
        ckpt.centroid,
        ckpt.config.batch_size,
        ckpt.config.noise_mode,
        noise_seed,
    )
}

pub fn generate_with_model(
    g: &Generator,
    trajectories: &[Trajectory],
    centroid: (f64, f64),
    batch_size: usize,
    noise_mode: NoiseMode,
    noise_seed: u64,
) -> Result<Vec<Trajectory>, TrajGanError> {
    let mut out = Vec::with_capacity(trajectories.len());
    for chunk in trajectories.chunks(batch_size.max(1)) {
        let items: Vec<&Trajectory> = chunk.iter().collect();
        let real = EncodedBatch::from_trajectories(&items, centroid, g.categories(), 0)?;
        let noise = trajectory_noise(&real, g.noise_dim(), noise_mode, noise_seed);
        let (fake, _) = g.forward(&real, &noise)?;
        for (b, soft) in fake.to_soft().iter().enumerate() {
            out.push(decode_trajectory(soft, &fake.item_mask(b), centroid)?);
        }
    }
    Ok(out)
}
