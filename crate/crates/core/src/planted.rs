//! Seeded synthetic check-in corpus with planted per-user habits.
//!
//! Users live in spatial clusters. Inside a cluster every user has a role;
//! the role fixes a home anchor offset from the cluster centre and the
//! user's preferred hours, days and categories. The same roles repeat in
//! every cluster, so time and category narrow a user down to a role while
//! location narrows them down to a cluster, and only both together identify
//! the user.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{DataError, Dataset, Trajectory, TrajectoryPoint, DAYS, HOURS};

const METERS_PER_DEGREE: f64 = 111_320.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub clusters: usize,
    pub users_per_cluster: usize,
    pub trajectories_per_user: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub categories: usize,
    /// Centre of the cluster layout.
    pub origin: (f64, f64),
    /// Distance between neighbouring cluster centres.
    pub cluster_spacing_km: f64,
    /// Distance of each user's anchor from its cluster centre.
    pub anchor_offset_km: f64,
    /// Per-axis standard deviation of visits around the anchor.
    pub spread_km: f64,
    pub preferred_hours: usize,
    pub preferred_days: usize,
    pub preferred_categories: usize,
    /// Probability that a visit's hour, day or category follows the role's
    /// preferences rather than being uniform.
    pub hour_adherence: f64,
    pub day_adherence: f64,
    pub category_adherence: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            clusters: 5,
            users_per_cluster: 4,
            trajectories_per_user: 10,
            min_length: 8,
            max_length: 24,
            categories: 10,
            origin: (40.75, -73.95),
            cluster_spacing_km: 3.0,
            anchor_offset_km: 0.8,
            spread_km: 0.2,
            preferred_hours: 3,
            preferred_days: 2,
            preferred_categories: 2,
            hour_adherence: 0.9,
            day_adherence: 0.5,
            category_adherence: 0.5,
            seed: 7,
        }
    }
}

impl PlantedConfig {
    pub fn users(&self) -> usize {
        self.clusters * self.users_per_cluster
    }
}

struct Role {
    offset: (f64, f64),
    hours: Vec<usize>,
    days: Vec<usize>,
    categories: Vec<usize>,
}

fn pick<R: Rng>(rng: &mut R, preferred: &[usize], universe: usize, adherence: f64) -> usize {
    if rng.random_bool(adherence) {
        preferred[rng.random_range(0..preferred.len())]
    } else {
        rng.random_range(0..universe)
    }
}

/// Builds the corpus. User `u` belongs to cluster `u / users_per_cluster`
/// and has role `u % users_per_cluster`; trajectory ids run from 0 in
/// user-major order and category names are `"0"`..`"C-1"`.
pub fn planted_dataset(cfg: &PlantedConfig) -> Result<Dataset, DataError> {
    let bad = |m: &str| Err(DataError::Parameter(m.to_string()));
    if cfg.clusters == 0 || cfg.users_per_cluster == 0 || cfg.trajectories_per_user == 0 || cfg.categories == 0 {
        return bad("clusters, users, trajectories and categories must be positive");
    }
    if cfg.min_length == 0 || cfg.min_length > cfg.max_length {
        return bad("lengths must satisfy 1 <= min_length <= max_length");
    }
    let counts = [
        (cfg.preferred_hours, HOURS),
        (cfg.preferred_days, DAYS),
        (cfg.preferred_categories, cfg.categories),
    ];
    if counts.iter().any(|&(k, n)| k == 0 || k > n) {
        return bad("preference counts must lie between 1 and the vocabulary size");
    }
    let adherences = [cfg.hour_adherence, cfg.day_adherence, cfg.category_adherence];
    if adherences.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return bad("adherence must be a probability");
    }
    let spread = Normal::new(0.0, cfg.spread_km * 1000.0).map_err(|e| DataError::Parameter(format!("spread: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let meters_per_lon = METERS_PER_DEGREE * cfg.origin.0.to_radians().cos();
    let to_degrees = |(north, east): (f64, f64)| (north / METERS_PER_DEGREE, east / meters_per_lon);

    let roles: Vec<Role> = (0..cfg.users_per_cluster)
        .map(|r| {
            let angle = std::f64::consts::TAU * r as f64 / cfg.users_per_cluster as f64;
            let off = cfg.anchor_offset_km * 1000.0;
            Role {
                offset: to_degrees((off * angle.cos(), off * angle.sin())),
                hours: sample(&mut rng, HOURS, cfg.preferred_hours).into_vec(),
                days: sample(&mut rng, DAYS, cfg.preferred_days).into_vec(),
                categories: sample(&mut rng, cfg.categories, cfg.preferred_categories).into_vec(),
            }
        })
        .collect();
    let side = (cfg.clusters as f64).sqrt().ceil() as usize;
    let middle = (side as f64 - 1.0) / 2.0;
    let centres: Vec<(f64, f64)> = (0..cfg.clusters)
        .map(|k| {
            let (row, col) = ((k / side) as f64 - middle, (k % side) as f64 - middle);
            let d = to_degrees((row * cfg.cluster_spacing_km * 1000.0, col * cfg.cluster_spacing_km * 1000.0));
            (cfg.origin.0 + d.0, cfg.origin.1 + d.1)
        })
        .collect();

    let mut trajectories = Vec::with_capacity(cfg.users() * cfg.trajectories_per_user);
    for u in 0..cfg.users() {
        let centre = centres[u / cfg.users_per_cluster];
        let role = &roles[u % cfg.users_per_cluster];
        let anchor = (centre.0 + role.offset.0, centre.1 + role.offset.1);
        for k in 0..cfg.trajectories_per_user {
            let len = rng.random_range(cfg.min_length..=cfg.max_length);
            let points = (0..len)
                .map(|_| {
                    let (dn, de) = to_degrees((spread.sample(&mut rng), spread.sample(&mut rng)));
                    TrajectoryPoint::new(
                        anchor.0 + dn,
                        anchor.1 + de,
                        pick(&mut rng, &role.days, DAYS, cfg.day_adherence) as u8,
                        pick(&mut rng, &role.hours, HOURS, cfg.hour_adherence) as u8,
                        pick(&mut rng, &role.categories, cfg.categories, cfg.category_adherence),
                    )
                })
                .collect();
            trajectories.push(Trajectory {
                tid: (u * cfg.trajectories_per_user + k) as u64,
                uid: u as u64,
                points,
            });
        }
    }
    let vocab = (0..cfg.categories).map(|c| c.to_string()).collect();
    Dataset::new(trajectories, vocab)
}
