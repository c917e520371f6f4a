//! Measurements shared by the property tests and the acceptance target.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use trajshield::data::{Dataset, TrajectoryPoint};
use trajshield::encoding::{decode_trajectory, encode_and_pad, SoftTrajectory};
use trajshield::eval::{hausdorff, hull_jaccard, pearson};
use trajshield::geomask::{gaussian_perturb_point, haversine_km, random_perturb_point, MaskConfig, MaskMethod};

use super::{oracle, random_trajectories, rng};

pub struct RoundTrip {
    pub trajectories: usize,
    pub attribute_mismatches: usize,
    pub max_coordinate_error: f64,
}

/// Encodes and decodes `n` random trajectories against their own corpus
/// centroid and maximum length.
pub fn encode_decode(n: usize, seed: u64) -> RoundTrip {
    let categories = 17;
    let mut r = rng(seed);
    let trajs = random_trajectories(&mut r, n, 25, 40, categories);
    let vocab = (0..categories).map(|c| format!("c{c}")).collect();
    let ds = Dataset::new(trajs, vocab).unwrap();
    let (centroid, max_len) = (ds.centroid(), ds.max_length());
    let mut out = RoundTrip {
        trajectories: n,
        attribute_mismatches: 0,
        max_coordinate_error: 0.0,
    };
    for t in ds.trajectories() {
        let enc = encode_and_pad(t, centroid, max_len, categories).unwrap();
        let back = decode_trajectory(&SoftTrajectory::from(&enc), &enc.mask, centroid).unwrap();
        assert_eq!((back.tid, back.uid, back.len()), (t.tid, t.uid, t.len()));
        for (a, b) in t.points.iter().zip(&back.points) {
            if (a.day, a.hour, a.category) != (b.day, b.hour, b.category) {
                out.attribute_mismatches += 1;
            }
            let err = (a.lat - b.lat).abs().max((a.lon - b.lon).abs());
            out.max_coordinate_error = out.max_coordinate_error.max(err);
        }
    }
    out
}

pub struct Displacements {
    pub max_km: f64,
    pub mean_km: f64,
}

/// Random perturbation of a fixed point at latitude 40.7 with a 1 km radius.
pub fn random_perturbation(samples: usize, seed: u64) -> Displacements {
    let cfg = MaskConfig::default();
    let p = TrajectoryPoint::new(40.7, -74.0, 0, 12, 0);
    let mut r = rng(seed);
    let (mut max, mut sum) = (0.0f64, 0.0);
    for _ in 0..samples {
        let q = random_perturb_point(&p, &cfg, &mut r).unwrap();
        let d = haversine_km((p.lat, p.lon), (q.lat, q.lon));
        max = max.max(d);
        sum += d;
    }
    Displacements {
        max_km: max,
        mean_km: sum / samples as f64,
    }
}

/// Per-axis sample standard deviations of Gaussian masking with σ = 0.001°.
pub fn gaussian_std(samples: usize, seed: u64) -> (f64, f64) {
    let cfg = MaskConfig {
        method: MaskMethod::Gaussian,
        gaussian_sigma_deg: 0.001,
        ..MaskConfig::default()
    };
    let p = TrajectoryPoint::new(40.7, -74.0, 0, 12, 0);
    let mut r = rng(seed);
    let (dlat, dlon): (Vec<f64>, Vec<f64>) = (0..samples)
        .map(|_| {
            let q = gaussian_perturb_point(&p, &cfg, &mut r);
            (q.lat - p.lat, q.lon - p.lon)
        })
        .unzip();
    (std(&dlat), std(&dlon))
}

fn std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}


pub fn unit_points(r: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|_| (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect()
}

/// Largest gap between `hausdorff` and exhaustive search over random pairs
/// of up to 30 points.
pub fn hausdorff_error(pairs: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    (0..pairs)
        .map(|_| {
            let (n, m) = (r.random_range(1..=30), r.random_range(1..=30));
            let (a, b) = (unit_points(&mut r, n), unit_points(&mut r, m));
            (hausdorff(&a, &b).unwrap() - oracle::hausdorff(&a, &b)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest gap between `hull_jaccard` and a Monte-Carlo area estimate.
pub fn jaccard_error(pairs: usize, samples: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    (0..pairs)
        .map(|_| {
            let (n, m) = (r.random_range(3..=15), r.random_range(3..=15));
            let a = unit_points(&mut r, n);
            // shift b so the overlap varies from none to most
            let shift = r.random_range(-1.5..1.5);
            let b: Vec<(f64, f64)> = unit_points(&mut r, m).into_iter().map(|(x, y)| (x + shift, y)).collect();
            let got = hull_jaccard(&a, &b).unwrap();
            (got - oracle::monte_carlo_jaccard(&a, &b, samples, &mut r)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest gap between `pearson` and the raw-sum formula on correlated samples.
pub fn pearson_error(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    (0..cases)
        .map(|_| {
            let n = r.random_range(2..60);
            let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| 0.3 * v + r.random_range(-50.0..50.0)).collect();
            (pearson(&x, &y).unwrap() - oracle::pearson(&x, &y)).abs()
        })
        .fold(0.0, f64::max)
}
