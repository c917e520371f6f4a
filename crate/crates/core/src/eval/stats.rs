use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::{Trajectory, HOURS};

/// Category-by-hour visit probabilities: row `c` is the hour distribution of
/// visits to category `c`, or all zeros if it was never visited.
pub fn temporal_visit_matrix(trajectories: &[Trajectory], categories: usize) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0u64; HOURS]; categories];
    for p in trajectories.iter().flat_map(|t| &t.points) {
        counts[p.category][p.hour as usize] += 1;
    }
    counts
        .into_iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.into_iter()
                .map(|n| if total == 0 { 0.0 } else { n as f64 / total as f64 })
                .collect()
        })
        .collect()
}

/// Raw visit counts per hour and per category.
pub fn frequency_distributions(trajectories: &[Trajectory], categories: usize) -> (Vec<u64>, Vec<u64>) {
    let mut hourly = vec![0u64; HOURS];
    let mut categorical = vec![0u64; categories];
    for p in trajectories.iter().flat_map(|t| &t.points) {
        hourly[p.hour as usize] += 1;
        categorical[p.category] += 1;
    }
    (hourly, categorical)
}

/// Sample Pearson correlation.
///
/// Undefined when both series are constant (error); when exactly one is
/// constant there is no linear relationship to measure and 0 is returned.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(EvalError::Correlation(format!(
            "need two series of equal length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    match (sxx == 0.0, syy == 0.0) {
        (true, true) => Err(EvalError::Correlation("both series are constant".into())),
        (true, false) | (false, true) => Ok(0.0),
        _ => Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)),
    }
}

/// Min, max, population standard deviation and mean of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::Empty("cannot summarize an empty sample".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: var.sqrt(),
            mean,
        })
    }
}
