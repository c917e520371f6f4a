//! Baseline location masking: random perturbation within a disk, Gaussian
//! geomasking, and an optional random time shift.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::{Trajectory, TrajectoryPoint, DAYS, HOURS};

/// Metres per degree of latitude used by the tangent-plane displacement.
pub const METERS_PER_DEGREE: f64 = 111_320.0;
/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;
/// Latitudes at or beyond this magnitude are rejected by random perturbation.
pub const MAX_ABS_LATITUDE: f64 = 89.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MaskError {
    #[error("latitude {0} is too close to a pole for tangent-plane displacement")]
    UnsupportedLatitude(f64),
    #[error("invalid masking configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMethod {
    RandomPerturbation,
    Gaussian,
}

impl fmt::Display for MaskMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskMethod::RandomPerturbation => "rp",
            MaskMethod::Gaussian => "gaussian",
        })
    }
}

impl FromStr for MaskMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rp" | "random_perturbation" => Ok(MaskMethod::RandomPerturbation),
            "gaussian" => Ok(MaskMethod::Gaussian),
            _ => Err(format!("unknown masking method `{s}` (valid: rp, gaussian)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskConfig {
    pub method: MaskMethod,
    pub spatial_radius_km: f64,
    pub gaussian_sigma_deg: f64,
    pub temporal: bool,
    pub temporal_window_h: u32,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            method: MaskMethod::RandomPerturbation,
            spatial_radius_km: 1.0,
            gaussian_sigma_deg: 0.001,
            temporal: false,
            temporal_window_h: 24,
            seed: 0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), MaskError> {
        let bad = |m: String| Err(MaskError::Config(m));
        if !(self.spatial_radius_km > 0.0 && self.spatial_radius_km.is_finite()) {
            return bad(format!("radius {} km must be positive", self.spatial_radius_km));
        }
        if !(self.gaussian_sigma_deg > 0.0 && self.gaussian_sigma_deg.is_finite()) {
            return bad(format!("sigma {} must be positive", self.gaussian_sigma_deg));
        }
        if !(1..=HOURS as u32).contains(&self.temporal_window_h) {
            return bad(format!("temporal window {} h must be within 1..=24", self.temporal_window_h));
        }
        Ok(())
    }
}

/// Great-circle distance in kilometres between `(lat, lon)` pairs in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (phi1, phi2) = (a.0.to_radians(), b.0.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.1 - a.1).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Moves `p` by `meters` in direction `theta` (radians from north, towards
/// east) on the local tangent plane.
pub fn displace(p: &TrajectoryPoint, meters: f64, theta: f64) -> Result<TrajectoryPoint, MaskError> {
    if p.lat.abs() >= MAX_ABS_LATITUDE {
        return Err(MaskError::UnsupportedLatitude(p.lat));
    }
    let mut q = *p;
    q.lat += meters * theta.cos() / METERS_PER_DEGREE;
    q.lon += meters * theta.sin() / (METERS_PER_DEGREE * p.lat.to_radians().cos());
    Ok(q)
}

/// Displacement drawn uniformly over the disk of the configured radius.
pub fn random_perturb_point<R: Rng + ?Sized>(
    p: &TrajectoryPoint,
    cfg: &MaskConfig,
    rng: &mut R,
) -> Result<TrajectoryPoint, MaskError> {
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let u: f64 = rng.random();
    displace(p, cfg.spatial_radius_km * 1000.0 * u.sqrt(), theta)
}

/// Independent normal noise with standard deviation `gaussian_sigma_deg`
/// on each axis.
pub fn gaussian_perturb_point<R: Rng + ?Sized>(p: &TrajectoryPoint, cfg: &MaskConfig, rng: &mut R) -> TrajectoryPoint {
    let n = Normal::new(0.0, cfg.gaussian_sigma_deg).expect("validated sigma");
    let mut q = *p;
    q.lat += n.sample(rng);
    q.lon += n.sample(rng);
    q
}

/// Shifts the visit time by `offset` hours, carrying into the day of week.
pub fn shift_hours(p: &TrajectoryPoint, offset: i32) -> TrajectoryPoint {
    let total = p.hour as i32 + offset;
    let day_shift = total.div_euclid(HOURS as i32);
    let mut q = *p;
    q.hour = total.rem_euclid(HOURS as i32) as u8;
    q.day = (p.day as i32 + day_shift).rem_euclid(DAYS as i32) as u8;
    q
}

/// Shifts by an offset drawn uniformly from `-(W-1)..=(W-1)` hours.
pub fn temporal_perturb<R: Rng + ?Sized>(p: &TrajectoryPoint, cfg: &MaskConfig, rng: &mut R) -> TrajectoryPoint {
    let w = cfg.temporal_window_h as i32 - 1;
    shift_hours(p, rng.random_range(-w..=w))
}

fn mask_trajectory(t: &Trajectory, cfg: &MaskConfig) -> Result<Trajectory, MaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(t.tid);
    let points = t
        .points
        .iter()
        .map(|p| {
            let mut q = match cfg.method {
                MaskMethod::RandomPerturbation => random_perturb_point(p, cfg, &mut rng)?,
                MaskMethod::Gaussian => gaussian_perturb_point(p, cfg, &mut rng),
            };
            if cfg.temporal {
                q = temporal_perturb(&q, cfg, &mut rng);
            }
            Ok(q)
        })
        .collect::<Result<_, MaskError>>()?;
    Ok(Trajectory {
        tid: t.tid,
        uid: t.uid,
        points,
    })
}

/// Masks every trajectory. Each one draws from its own stream keyed by
/// `(seed, tid)`, so the result does not depend on order or threading.
pub fn mask_dataset(trajectories: &[Trajectory], cfg: &MaskConfig) -> Result<Vec<Trajectory>, MaskError> {
    cfg.validate()?;
    trajectories.par_iter().map(|t| mask_trajectory(t, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(lat: f64, lon: f64) -> TrajectoryPoint {
        TrajectoryPoint::new(lat, lon, 2, 13, 0)
    }

    #[test]
    fn zero_radius_leaves_point() {
        let p = point(40.7, -74.0);
        assert_eq!(displace(&p, 0.0, 1.234).unwrap(), p);
    }

    #[test]
    fn eastward_move_at_equator() {
        let p = point(0.0, 10.0);
        let q = displace(&p, 1000.0, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((q.lat - 0.0).abs() < 1e-9);
        assert!((q.lon - 10.0 - 1000.0 / METERS_PER_DEGREE).abs() < 1e-12);
    }

    #[test]
    fn polar_latitudes_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = random_perturb_point(&point(89.5, 0.0), &MaskConfig::default(), &mut rng);
        assert_eq!(r, Err(MaskError::UnsupportedLatitude(89.5)));
    }

    #[test]
    fn haversine_one_degree_of_latitude() {
        let d = haversine_km((0.0, 0.0), (1.0, 0.0));
        assert!((d - EARTH_RADIUS_KM * 1f64.to_radians()).abs() < 1e-9);
        assert_eq!(haversine_km((40.7, -74.0), (40.7, -74.0)), 0.0);
    }

    #[test]
    fn tiny_sigma_is_numerically_identity() {
        let cfg = MaskConfig {
            method: MaskMethod::Gaussian,
            gaussian_sigma_deg: 1e-12,
            ..MaskConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = point(40.7, -74.0);
        let q = gaussian_perturb_point(&p, &cfg, &mut rng);
        assert!((q.lat - p.lat).abs() < 1e-9 && (q.lon - p.lon).abs() < 1e-9);
    }

    #[test]
    fn hour_wraparound_carries_day() {
        let p = TrajectoryPoint::new(0.0, 0.0, 6, 23, 0);
        let q = shift_hours(&p, 2);
        assert_eq!((q.day, q.hour), (0, 1));
        let q = shift_hours(&TrajectoryPoint::new(0.0, 0.0, 0, 1, 0), -3);
        assert_eq!((q.day, q.hour), (6, 22));
    }

    #[test]
    fn unit_window_never_shifts() {
        let cfg = MaskConfig {
            temporal: true,
            temporal_window_h: 1,
            ..MaskConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = point(1.0, 1.0);
        for _ in 0..100 {
            assert_eq!(temporal_perturb(&p, &cfg, &mut rng), p);
        }
    }

    #[test]
    fn method_names() {
        assert_eq!("rp".parse::<MaskMethod>(), Ok(MaskMethod::RandomPerturbation));
        assert_eq!("gaussian".parse::<MaskMethod>(), Ok(MaskMethod::Gaussian));
        let err = "nonsense".parse::<MaskMethod>().unwrap_err();
        assert!(err.contains("rp") && err.contains("gaussian"));
    }
}
