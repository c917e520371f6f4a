//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod grad;
pub mod oracle;
pub mod props;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajshield::data::{Trajectory, TrajectoryPoint, DAYS, HOURS};
use trajshield::encoding::EncodedBatch;
use trajshield::neural::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, categories: usize) -> TrajectoryPoint {
    TrajectoryPoint::new(
        40.7 + rng.random_range(-0.05..0.05),
        -74.0 + rng.random_range(-0.05..0.05),
        rng.random_range(0..DAYS as u8),
        rng.random_range(0..HOURS as u8),
        rng.random_range(0..categories),
    )
}

/// Trajectories with ids `0..n`, users `tid % users` and lengths in `1..=max_len`.
pub fn random_trajectories(
    rng: &mut ChaCha8Rng,
    n: usize,
    users: u64,
    max_len: usize,
    categories: usize,
) -> Vec<Trajectory> {
    (0..n as u64)
        .map(|tid| {
            let len = rng.random_range(1..=max_len);
            Trajectory {
                tid,
                uid: tid % users,
                points: (0..len).map(|_| random_point(rng, categories)).collect(),
            }
        })
        .collect()
}

pub fn batch_of(trajectories: &[Trajectory], centroid: (f64, f64), categories: usize) -> EncodedBatch {
    let items: Vec<&Trajectory> = trajectories.iter().collect();
    EncodedBatch::from_trajectories(&items, centroid, categories, 0).unwrap()
}

pub fn bits(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

/// Bit patterns of every parameter value, ignoring gradients and optimizer state.
pub fn param_bits<M: trajshield::neural::Parameterized>(m: &M) -> Vec<Vec<u64>> {
    m.parameters().iter().map(|p| bits(p.value.data())).collect()
}
