//! Privacy and utility evaluation of candidate trajectories against the
//! originals they were derived from.

mod geometry;
mod stats;
mod tul;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use geometry::{convex_hull, hausdorff, hull_jaccard, polygon_area, Point};
pub use stats::{frequency_distributions, pearson, temporal_visit_matrix, Summary};
pub use tul::{train_tul, tul_metrics, tul_metrics_from_scores, TulConfig, TulMetrics, TulModel};

use crate::data::Trajectory;
use crate::archive::ArchiveError;
use crate::encoding::EncodingError;
use crate::neural::NeuralError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0}")]
    Empty(String),
    #[error("user-linking needs at least 2 users, found {0}")]
    TooFewUsers(usize),
    #[error("user {0} is unknown to the user-linking model")]
    UnknownUser(u64),
    #[error("trajectory {0} has no counterpart in the other set")]
    UnpairedTid(u64),
    #[error("correlation undefined: {0}")]
    Correlation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub acc1: f64,
    pub acc5: f64,
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
    pub hausdorff: Summary,
    pub jaccard: Summary,
    pub temporal_matrix: Vec<Vec<f64>>,
    pub hourly_freq: Vec<f64>,
    pub category_freq: Vec<f64>,
    pub pearson_temporal: f64,
    pub pearson_categorical: f64,
}

/// Pairs every original with the candidate of the same tid.
pub fn pair_by_tid<'a>(
    original: &'a [Trajectory],
    candidate: &'a [Trajectory],
) -> Result<Vec<(&'a Trajectory, &'a Trajectory)>, EvalError> {
    let by_tid: BTreeMap<u64, &Trajectory> = candidate.iter().map(|t| (t.tid, t)).collect();
    let originals: BTreeMap<u64, &Trajectory> = original.iter().map(|t| (t.tid, t)).collect();
    if let Some(t) = candidate.iter().find(|t| !originals.contains_key(&t.tid)) {
        return Err(EvalError::UnpairedTid(t.tid));
    }
    original
        .iter()
        .map(|o| by_tid.get(&o.tid).map(|c| (o, *c)).ok_or(EvalError::UnpairedTid(o.tid)))
        .collect()
}

fn to_f64(v: Vec<u64>) -> Vec<f64> {
    v.into_iter().map(|n| n as f64).collect()
}

/// Computes every report field for `candidate` relative to `original`.
pub fn evaluate_all(
    original: &[Trajectory],
    candidate: &[Trajectory],
    tul: &TulModel,
) -> Result<EvaluationReport, EvalError> {
    let pairs = pair_by_tid(original, candidate)?;
    if pairs.is_empty() {
        return Err(EvalError::Empty("no trajectories to evaluate".into()));
    }
    let tm = tul_metrics(tul, candidate)?;
    let per_pair = pairs
        .par_iter()
        .map(|(o, c)| {
            let (a, b) = (o.coordinates(), c.coordinates());
            Ok((hausdorff(&a, &b)?, hull_jaccard(&a, &b)?))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let (hd, jc): (Vec<f64>, Vec<f64>) = per_pair.into_iter().unzip();
    let categories = tul.categories();
    let (orig_hourly, orig_cat) = frequency_distributions(original, categories);
    let (hourly, cat) = frequency_distributions(candidate, categories);
    let (orig_hourly, orig_cat, hourly, cat) = (to_f64(orig_hourly), to_f64(orig_cat), to_f64(hourly), to_f64(cat));
    Ok(EvaluationReport {
        acc1: tm.acc1,
        acc5: tm.acc5,
        macro_p: tm.macro_p,
        macro_r: tm.macro_r,
        macro_f1: tm.macro_f1,
        hausdorff: Summary::of(&hd)?,
        jaccard: Summary::of(&jc)?,
        temporal_matrix: temporal_visit_matrix(candidate, categories),
        pearson_temporal: pearson(&hourly, &orig_hourly)?,
        pearson_categorical: pearson(&cat, &orig_cat)?,
        hourly_freq: hourly,
        category_freq: cat,
    })
}

impl EvaluationReport {
    /// Scalar fields as a two-line CSV (header, values).
    pub fn to_csv(&self) -> String {
        let mut names: Vec<String> = ["acc1", "acc5", "macro_p", "macro_r", "macro_f1"].map(String::from).to_vec();
        let mut values = vec![self.acc1, self.acc5, self.macro_p, self.macro_r, self.macro_f1];
        for (prefix, s) in [("hausdorff", &self.hausdorff), ("jaccard", &self.jaccard)] {
            for (field, v) in [("min", s.min), ("max", s.max), ("std", s.std), ("mean", s.mean)] {
                names.push(format!("{prefix}_{field}"));
                values.push(v);
            }
        }
        names.extend(["pearson_temporal", "pearson_categorical"].map(String::from));
        values.extend([self.pearson_temporal, self.pearson_categorical]);
        let values: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        format!("{}\n{}\n", names.join(","), values.join(","))
    }
}

/// A category-by-hour grid as CSV, one row per category.
pub fn matrix_csv(matrix: &[Vec<f64>], row_names: &[String]) -> String {
    let mut out = String::from("category");
    for h in 0..crate::data::HOURS {
        let _ = write!(out, ",h{h}");
    }
    out.push('\n');
    for (row, name) in matrix.iter().zip(row_names) {
        out.push_str(&csv_field(name));
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const COMPARISON_COLUMNS: [&str; 6] = ["Method", "ACC@1", "ACC@5", "Macro-F1", "Macro-P", "Macro-R"];

/// One row per method with the user-linking scores, three decimals.
pub fn comparison_table(rows: &[(String, EvaluationReport)]) -> String {
    let mut out = COMPARISON_COLUMNS.join(",");
    out.push('\n');
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            csv_field(name),
            r.acc1,
            r.acc5,
            r.macro_f1,
            r.macro_p,
            r.macro_r
        );
    }
    out
}
