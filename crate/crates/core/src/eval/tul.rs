//! Trajectory-user linking: a recurrent classifier used as the attacker,
//! and the accuracy metrics computed from its scores.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::archive::{restore_parameters, Archive, ArchiveError};
use crate::data::Trajectory;
use crate::encoding::EncodedBatch;
use crate::neural::{adam_step, sce_with_grad, Activation, AdamConfig, Dense, Lstm, LstmMode, Parameter, Parameterized, Tensor};
use crate::trajgan::FrontEnd;

#[derive(Debug, Clone, PartialEq)]
pub struct TulConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub units: usize,
    pub spatial_embed: usize,
    pub seed: u64,
}

impl Default for TulConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.001,
            batch_size: 64,
            units: 100,
            spatial_embed: 64,
            seed: 0,
        }
    }
}

/// Embedding front end, many-to-one LSTM and a softmax over known users.
#[derive(Debug, Clone, PartialEq)]
pub struct TulModel {
    pub front: FrontEnd,
    pub lstm: Lstm,
    pub head: Dense,
    /// Class index to user id, ascending.
    pub users: Vec<u64>,
    pub centroid: (f64, f64),
}

impl Parameterized for TulModel {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.front.parameters();
        v.extend(self.lstm.parameters());
        v.extend(self.head.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.front.parameters_mut();
        v.extend(self.lstm.parameters_mut());
        v.extend(self.head.parameters_mut());
        v
    }
}

impl TulModel {
    pub fn categories(&self) -> usize {
        self.front.categories()
    }

    pub fn class_of(&self, uid: u64) -> Option<usize> {
        self.users.binary_search(&uid).ok()
    }

    /// Padded to the longest trajectory of each batch; masking makes the
    /// result independent of the padding length.
    fn batch(&self, items: &[&Trajectory]) -> Result<EncodedBatch, EvalError> {
        Ok(EncodedBatch::from_trajectories(items, self.centroid, self.categories(), 0)?)
    }

    fn forward(&self, b: &EncodedBatch) -> Result<(Tensor, TulTape), EvalError> {
        let front = self.front.forward(b, None)?;
        let (hidden, cache) = self
            .lstm
            .forward_sequence(&front.fused, &b.mask, b.steps, b.batch, LstmMode::ManyToOne)?;
        let probs = self.head.forward(&hidden)?;
        Ok((probs.clone(), TulTape { front, cache, hidden, probs }))
    }

    /// Class probabilities, one row per trajectory.
    pub fn predict_proba(&self, trajectories: &[Trajectory]) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut out = Vec::with_capacity(trajectories.len());
        for chunk in trajectories.chunks(256) {
            let items: Vec<&Trajectory> = chunk.iter().collect();
            let (p, _) = self.forward(&self.batch(&items)?)?;
            out.extend((0..p.rows()).map(|r| p.row(r).to_vec()));
        }
        Ok(out)
    }
}

const MAGIC: &[u8; 8] = b"TRJTUL\0\0";
const VERSION: u32 = 1;

impl TulModel {
    /// Writes the model (architecture sizes, users, centroid, weights).
    pub fn write<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut a = Archive::default();
        a.insert("categories", self.categories());
        a.insert("spatial_embed", self.front.spatial.out_dim());
        a.insert("units", self.lstm.units());
        a.insert("centroid", format!("{},{}", self.centroid.0, self.centroid.1));
        let users: Vec<String> = self.users.iter().map(u64::to_string).collect();
        a.insert("users", users.join(","));
        a.tensors = self
            .parameters()
            .into_iter()
            .map(|p| (p.name().to_string(), p.value.clone()))
            .collect();
        Ok(a.write(MAGIC, VERSION, w)?)
    }

    pub fn read<R: Read>(r: R) -> Result<Self, EvalError> {
        let mut a = Archive::read(MAGIC, VERSION, "user-linking model", r)?;
        let categories: usize = a.parse("categories")?;
        let spatial_embed: usize = a.parse("spatial_embed")?;
        let units: usize = a.parse("units")?;
        let centroid = a.pair("centroid")?;
        let users = a
            .get("users")?
            .split(',')
            .map(|u| u.parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ArchiveError::Corrupt("bad user list".into()))?;
        if users.len() < 2 || users.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ArchiveError::Corrupt("user list must hold at least 2 ascending ids".into()).into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = TulModel {
            front: FrontEnd::new("tul", categories, spatial_embed, 0, units, &mut rng),
            lstm: Lstm::new("tul.lstm", units, units, &mut rng),
            head: Dense::new("tul.head", units, users.len(), Activation::Softmax, &mut rng),
            users,
            centroid,
        };
        let mut tensors = a.take_tensors()?;
        restore_parameters(model.parameters_mut(), &mut tensors)?;
        if let Some(name) = tensors.keys().next() {
            return Err(ArchiveError::Corrupt(format!("unexpected tensor `{name}`")).into());
        }
        Ok(model)
    }
}

struct TulTape {
    front: crate::trajgan::FrontTape,
    cache: crate::neural::LstmCache,
    hidden: Tensor,
    probs: Tensor,
}

/// Trains the classifier on labelled trajectories. Returns the model and the
/// mean training loss of every epoch.
pub fn train_tul(
    train: &[Trajectory],
    centroid: (f64, f64),
    categories: usize,
    cfg: &TulConfig,
) -> Result<(TulModel, Vec<f64>), EvalError> {
    let users: Vec<u64> = train.iter().map(|t| t.uid).collect::<BTreeSet<_>>().into_iter().collect();
    if users.len() < 2 {
        return Err(EvalError::TooFewUsers(users.len()));
    }
    if cfg.batch_size == 0 || cfg.units == 0 || cfg.spatial_embed == 0 {
        return Err(EvalError::Config("batch_size, units and spatial_embed must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = TulModel {
        front: FrontEnd::new("tul", categories, cfg.spatial_embed, 0, cfg.units, &mut rng),
        lstm: Lstm::new("tul.lstm", cfg.units, cfg.units, &mut rng),
        head: Dense::new("tul.head", cfg.units, users.len(), Activation::Softmax, &mut rng),
        users,
        centroid,
    };
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&Trajectory> = chunk.iter().map(|&i| &train[i]).collect();
            let b = model.batch(&items)?;
            let mut truth = Tensor::zeros(&[items.len(), model.users.len()]);
            for (r, t) in items.iter().enumerate() {
                let c = model.class_of(t.uid).expect("training user");
                truth.row_mut(r)[c] = 1.0;
            }
            model.zero_grad();
            let (probs, tape) = model.forward(&b)?;
            let loss = sce_with_grad(&truth, &probs, &vec![1.0; items.len()])?;
            let dh = model
                .head
                .backward(&tape.hidden, &tape.probs, &loss.grad, true, true)
                .expect("input gradient");
            let d_fused = model
                .lstm
                .backward_sequence(&tape.front.fused, &b.mask, &tape.cache, &dh, true, true)
                .expect("input gradient");
            model.front.backward(&tape.front, &d_fused, &b.mask, true, false);
            adam_step(&mut model, &adam)?;
            total += loss.value;
            batches += 1;
        }
        history.push(total / batches as f64);
    }
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TulMetrics {
    pub acc1: f64,
    pub acc5: f64,
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
}

/// Class indices sorted by descending score; ties keep the lower index first.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Metrics from per-trajectory class scores and true class indices.
///
/// Macro precision and recall average over the classes present in `truth`;
/// a class that is never predicted has precision 0.
pub fn tul_metrics_from_scores(scores: &[Vec<f64>], truth: &[usize]) -> Result<TulMetrics, EvalError> {
    if scores.is_empty() || scores.len() != truth.len() {
        return Err(EvalError::Empty("no trajectories to score".into()));
    }
    let n = truth.len() as f64;
    let (mut hit1, mut hit5) = (0usize, 0usize);
    let mut predicted: BTreeMap<usize, usize> = BTreeMap::new();
    let mut actual: BTreeMap<usize, usize> = BTreeMap::new();
    let mut correct: BTreeMap<usize, usize> = BTreeMap::new();
    for (s, &y) in scores.iter().zip(truth) {
        let rank = ranking(s);
        let top = rank[0];
        if top == y {
            hit1 += 1;
            *correct.entry(y).or_default() += 1;
        }
        if rank.iter().take(5).any(|&c| c == y) {
            hit5 += 1;
        }
        *predicted.entry(top).or_default() += 1;
        *actual.entry(y).or_default() += 1;
    }
    let classes = actual.len() as f64;
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    for (c, &count) in &actual {
        let tp = correct.get(c).copied().unwrap_or(0) as f64;
        let pred = predicted.get(c).copied().unwrap_or(0);
        if pred > 0 {
            p_sum += tp / pred as f64;
        }
        r_sum += tp / count as f64;
    }
    let macro_p = p_sum / classes;
    let macro_r = r_sum / classes;
    let macro_f1 = if macro_p + macro_r > 0.0 {
        2.0 * macro_p * macro_r / (macro_p + macro_r)
    } else {
        0.0
    };
    Ok(TulMetrics {
        acc1: hit1 as f64 / n,
        acc5: hit5 as f64 / n,
        macro_p,
        macro_r,
        macro_f1,
    })
}

/// Scores `trajectories` with `model` against their true users.
pub fn tul_metrics(model: &TulModel, trajectories: &[Trajectory]) -> Result<TulMetrics, EvalError> {
    if trajectories.is_empty() {
        return Err(EvalError::Empty("no trajectories to score".into()));
    }
    let truth = trajectories
        .iter()
        .map(|t| model.class_of(t.uid).ok_or(EvalError::UnknownUser(t.uid)))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = model.predict_proba(trajectories)?;
    tul_metrics_from_scores(&scores, &truth)
}
