//! Network-ready trajectory representation.
//!
//! Coordinates become deviations from the corpus centroid, day/hour/category
//! become one-hot vectors, and every trajectory is zero pre-padded to a fixed
//! length with a mask marking the real slots. Decoding turns per-slot network
//! outputs back into semantic trajectories.

use crate::data::{Dataset, Trajectory, TrajectoryPoint, DAYS, HOURS};
use crate::neural::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum EncodingError {
    #[error("cannot compute the centroid of an empty dataset")]
    EmptyDataset,
    #[error("trajectory {tid} has {length} points, more than the maximum length {max_length}")]
    TooLong {
        tid: u64,
        length: usize,
        max_length: usize,
    },
    #[error("trajectory {tid}, slot {slot}: {what} probabilities sum to {sum}")]
    NotNormalized {
        tid: u64,
        slot: usize,
        what: &'static str,
        sum: f64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub(crate) fn compute_centroid_of(trajectories: &[Trajectory]) -> Option<(f64, f64)> {
    let mut n = 0usize;
    let (mut lat, mut lon) = (0.0, 0.0);
    for p in trajectories.iter().flat_map(|t| &t.points) {
        lat += p.lat;
        lon += p.lon;
        n += 1;
    }
    (n > 0).then(|| (lat / n as f64, lon / n as f64))
}

/// Unweighted mean of every point coordinate in the dataset.
pub fn compute_centroid(ds: &Dataset) -> Result<(f64, f64), EncodingError> {
    compute_centroid_of(ds.trajectories()).ok_or(EncodingError::EmptyDataset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPoint {
    pub dlat: f64,
    pub dlon: f64,
    pub day_onehot: [f64; DAYS],
    pub hour_onehot: [f64; HOURS],
    pub cat_onehot: Vec<f64>,
}

impl EncodedPoint {
    fn padding(categories: usize) -> Self {
        Self {
            dlat: 0.0,
            dlon: 0.0,
            day_onehot: [0.0; DAYS],
            hour_onehot: [0.0; HOURS],
            cat_onehot: vec![0.0; categories],
        }
    }
}

pub fn encode_point(p: &TrajectoryPoint, centroid: (f64, f64), categories: usize) -> EncodedPoint {
    let mut e = EncodedPoint::padding(categories);
    e.dlat = p.lat - centroid.0;
    e.dlon = p.lon - centroid.1;
    e.day_onehot[p.day as usize] = 1.0;
    e.hour_onehot[p.hour as usize] = 1.0;
    e.cat_onehot[p.category] = 1.0;
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTrajectory {
    pub tid: u64,
    pub uid: u64,
    /// Exactly `max_length` slots; padding first.
    pub slots: Vec<EncodedPoint>,
    /// 1 for real points, 0 for padding.
    pub mask: Vec<f64>,
    pub true_length: usize,
}

/// Encodes `t` and pre-pads it with all-zero slots up to `max_length`.
pub fn encode_and_pad(
    t: &Trajectory,
    centroid: (f64, f64),
    max_length: usize,
    categories: usize,
) -> Result<EncodedTrajectory, EncodingError> {
    let len = t.points.len();
    if len > max_length {
        return Err(EncodingError::TooLong {
            tid: t.tid,
            length: len,
            max_length,
        });
    }
    let pad = max_length - len;
    let mut slots = Vec::with_capacity(max_length);
    slots.extend((0..pad).map(|_| EncodedPoint::padding(categories)));
    slots.extend(t.points.iter().map(|p| encode_point(p, centroid, categories)));
    let mut mask = vec![0.0; pad];
    mask.resize(max_length, 1.0);
    Ok(EncodedTrajectory {
        tid: t.tid,
        uid: t.uid,
        slots,
        mask,
        true_length: len,
    })
}

/// Per-slot network output: deviations and probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPoint {
    pub dlat: f64,
    pub dlon: f64,
    pub day: Vec<f64>,
    pub hour: Vec<f64>,
    pub category: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftTrajectory {
    pub tid: u64,
    pub uid: u64,
    pub slots: Vec<SoftPoint>,
}

impl From<&EncodedTrajectory> for SoftTrajectory {
    fn from(e: &EncodedTrajectory) -> Self {
        Self {
            tid: e.tid,
            uid: e.uid,
            slots: e
                .slots
                .iter()
                .map(|s| SoftPoint {
                    dlat: s.dlat,
                    dlon: s.dlon,
                    day: s.day_onehot.to_vec(),
                    hour: s.hour_onehot.to_vec(),
                    category: s.cat_onehot.clone(),
                })
                .collect(),
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Turns generator output back into a trajectory, dropping padded slots.
pub fn decode_trajectory(
    soft: &SoftTrajectory,
    mask: &[f64],
    centroid: (f64, f64),
) -> Result<Trajectory, EncodingError> {
    if mask.len() != soft.slots.len() {
        return Err(EncodingError::Shape(format!(
            "{} slots vs mask of {}",
            soft.slots.len(),
            mask.len()
        )));
    }
    let mut points = Vec::new();
    for (slot, (s, &m)) in soft.slots.iter().zip(mask).enumerate() {
        if m == 0.0 {
            continue;
        }
        for (what, probs) in [("day", &s.day), ("hour", &s.hour), ("category", &s.category)] {
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(EncodingError::NotNormalized {
                    tid: soft.tid,
                    slot,
                    what,
                    sum,
                });
            }
        }
        points.push(TrajectoryPoint {
            lat: centroid.0 + s.dlat,
            lon: centroid.1 + s.dlon,
            day: argmax(&s.day) as u8,
            hour: argmax(&s.hour) as u8,
            category: argmax(&s.category),
        });
    }
    Ok(Trajectory {
        tid: soft.tid,
        uid: soft.uid,
        points,
    })
}

/// A batch of encoded trajectories laid out time-major for the networks:
/// row `t * batch + b` is slot `t` of trajectory `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub steps: usize,
    pub batch: usize,
    pub tids: Vec<u64>,
    pub uids: Vec<u64>,
    /// `N x 2` deviations (lat, lon).
    pub dev: Tensor,
    pub day: Tensor,
    pub hour: Tensor,
    pub category: Tensor,
    pub mask: Vec<f64>,
}

impl EncodedBatch {
    pub fn from_encoded(items: &[EncodedTrajectory], categories: usize) -> Result<Self, EncodingError> {
        let steps = items.first().map(|e| e.slots.len()).unwrap_or(0);
        if items.iter().any(|e| e.slots.len() != steps) {
            return Err(EncodingError::Shape("trajectories padded to different lengths".into()));
        }
        let batch = items.len();
        let n = steps * batch;
        let mut dev = Vec::with_capacity(n * 2);
        let mut day = Vec::with_capacity(n * DAYS);
        let mut hour = Vec::with_capacity(n * HOURS);
        let mut category = Vec::with_capacity(n * categories);
        let mut mask = Vec::with_capacity(n);
        for t in 0..steps {
            for e in items {
                let s = &e.slots[t];
                if s.cat_onehot.len() != categories {
                    return Err(EncodingError::Shape(format!(
                        "trajectory {} encoded with {} categories, expected {categories}",
                        e.tid,
                        s.cat_onehot.len()
                    )));
                }
                dev.extend([s.dlat, s.dlon]);
                day.extend_from_slice(&s.day_onehot);
                hour.extend_from_slice(&s.hour_onehot);
                category.extend_from_slice(&s.cat_onehot);
                mask.push(e.mask[t]);
            }
        }
        let shape = |e: crate::neural::NeuralError| EncodingError::Shape(e.to_string());
        Ok(Self {
            steps,
            batch,
            tids: items.iter().map(|e| e.tid).collect(),
            uids: items.iter().map(|e| e.uid).collect(),
            dev: Tensor::matrix(n, 2, dev).map_err(shape)?,
            day: Tensor::matrix(n, DAYS, day).map_err(shape)?,
            hour: Tensor::matrix(n, HOURS, hour).map_err(shape)?,
            category: Tensor::matrix(n, categories, category).map_err(shape)?,
            mask,
        })
    }

    /// Encodes and pads trajectories to the longest one among them, or to
    /// `min_steps` if that is longer.
    pub fn from_trajectories(
        trajectories: &[&Trajectory],
        centroid: (f64, f64),
        categories: usize,
        min_steps: usize,
    ) -> Result<Self, EncodingError> {
        let steps = trajectories
            .iter()
            .map(|t| t.len())
            .max()
            .unwrap_or(0)
            .max(min_steps);
        let encoded = trajectories
            .iter()
            .map(|t| encode_and_pad(t, centroid, steps, categories))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_encoded(&encoded, categories)
    }

    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }

    pub fn categories(&self) -> usize {
        self.category.cols()
    }

    pub fn row_index(&self, step: usize, item: usize) -> usize {
        step * self.batch + item
    }

    /// Masked-in slot count of batch item `b`.
    pub fn length(&self, b: usize) -> usize {
        (0..self.steps)
            .filter(|&t| self.mask[self.row_index(t, b)] != 0.0)
            .count()
    }

    /// Splits the batch back into one soft trajectory per item.
    pub fn to_soft(&self) -> Vec<SoftTrajectory> {
        (0..self.batch)
            .map(|b| SoftTrajectory {
                tid: self.tids[b],
                uid: self.uids[b],
                slots: (0..self.steps)
                    .map(|t| {
                        let r = self.row_index(t, b);
                        SoftPoint {
                            dlat: self.dev.row(r)[0],
                            dlon: self.dev.row(r)[1],
                            day: self.day.row(r).to_vec(),
                            hour: self.hour.row(r).to_vec(),
                            category: self.category.row(r).to_vec(),
                        }
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn item_mask(&self, b: usize) -> Vec<f64> {
        (0..self.steps).map(|t| self.mask[self.row_index(t, b)]).collect()
    }
}
