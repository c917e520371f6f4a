//! Semantic trajectory data model, CSV ingestion and train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoding::compute_centroid_of;

pub const DAYS: usize = 7;
pub const HOURS: usize = 24;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: cannot parse {field}: {message}")]
    Row {
        line: u64,
        field: String,
        message: String,
    },
    #[error("line {line}: invalid {field}: {message}")]
    Validation {
        line: u64,
        field: String,
        message: String,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One visit: location plus day of week, hour of day and POI category index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub lat: f64,
    pub lon: f64,
    /// 0 = Monday .. 6 = Sunday
    pub day: u8,
    pub hour: u8,
    pub category: usize,
}

impl TrajectoryPoint {
    pub fn new(lat: f64, lon: f64, day: u8, hour: u8, category: usize) -> Self {
        Self {
            lat,
            lon,
            day,
            hour,
            category,
        }
    }

    pub fn validate(&self, categories: usize) -> Result<(), String> {
        if !(-90.0..=90.0).contains(&self.lat) || !self.lat.is_finite() {
            return Err(format!("lat {} outside [-90, 90]", self.lat));
        }
        if !(-180.0..=180.0).contains(&self.lon) || !self.lon.is_finite() {
            return Err(format!("lon {} outside [-180, 180]", self.lon));
        }
        if self.day as usize >= DAYS {
            return Err(format!("day {} outside 0..=6", self.day));
        }
        if self.hour as usize >= HOURS {
            return Err(format!("hour {} outside 0..=23", self.hour));
        }
        if self.category >= categories {
            return Err(format!(
                "category index {} outside vocabulary of {categories}",
                self.category
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub tid: u64,
    pub uid: u64,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.lat, p.lon)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(DataError::Parameter(format!(
                "unknown split `{other}` (expected train or test)"
            ))),
        }
    }
}

/// An immutable, validated collection of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    category_vocab: Vec<String>,
    centroid: (f64, f64),
    max_length: usize,
    split: BTreeMap<u64, Split>,
}

impl Dataset {
    /// Validates the trajectories and derives centroid and max length.
    /// Every trajectory starts tagged as training data.
    pub fn new(trajectories: Vec<Trajectory>, category_vocab: Vec<String>) -> Result<Self, DataError> {
        if trajectories.is_empty() {
            return Err(DataError::Empty);
        }
        let mut seen = BTreeSet::new();
        for t in &trajectories {
            if t.points.is_empty() {
                return Err(DataError::Inconsistent(format!("trajectory {} has no points", t.tid)));
            }
            if !seen.insert(t.tid) {
                return Err(DataError::Inconsistent(format!("duplicate trajectory id {}", t.tid)));
            }
            for p in &t.points {
                p.validate(category_vocab.len())
                    .map_err(|m| DataError::Inconsistent(format!("trajectory {}: {m}", t.tid)))?;
            }
        }
        let centroid = compute_centroid_of(&trajectories).ok_or(DataError::Empty)?;
        let max_length = trajectories.iter().map(Trajectory::len).max().unwrap_or(0);
        let split = trajectories.iter().map(|t| (t.tid, Split::Train)).collect();
        Ok(Self {
            trajectories,
            category_vocab,
            centroid,
            max_length,
            split,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn category_vocab(&self) -> &[String] {
        &self.category_vocab
    }

    pub fn categories(&self) -> usize {
        self.category_vocab.len()
    }

    pub fn centroid(&self) -> (f64, f64) {
        self.centroid
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn users(&self) -> BTreeSet<u64> {
        self.trajectories.iter().map(|t| t.uid).collect()
    }

    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn split_of(&self, tid: u64) -> Option<Split> {
        self.split.get(&tid).copied()
    }

    /// Trajectories carrying the given split tag, in dataset order.
    pub fn split_trajectories(&self, which: Split) -> Vec<Trajectory> {
        self.trajectories
            .iter()
            .filter(|t| self.split[&t.tid] == which)
            .cloned()
            .collect()
    }
}

/// Column names used when reading a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub tid: String,
    pub uid: String,
    pub lat: String,
    pub lon: String,
    pub day: String,
    pub hour: String,
    pub category: String,
    /// Optional explicit ordering column within a trajectory.
    pub seq: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            tid: "tid".into(),
            uid: "uid".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            day: "day".into(),
            hour: "hour".into(),
            category: "category".into(),
            seq: Some("seq".into()),
        }
    }
}

const WEEKDAYS: [&str; 7] = [
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];

/// Parses `0..=6` or an English weekday name (full or three-letter).
pub fn parse_day(raw: &str) -> Option<u8> {
    let s = raw.trim();
    if let Ok(n) = s.parse::<i64>() {
        return (0..7).contains(&n).then_some(n as u8);
    }
    let lower = s.to_ascii_lowercase();
    WEEKDAYS
        .iter()
        .position(|d| *d == lower || (lower.len() == 3 && d.starts_with(&lower)))
        .map(|i| i as u8)
}

struct RawRow {
    line: u64,
    tid: u64,
    uid: u64,
    lat: f64,
    lon: f64,
    day: u8,
    hour: u8,
    category: String,
    seq: Option<i64>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: u64, field: &str) -> Result<T, DataError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse::<T>().map_err(|e| DataError::Row {
        line,
        field: field.to_string(),
        message: format!("`{raw}`: {e}"),
    })
}

/// Loads a dataset from a CSV file. See [`read_csv`].
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    vocabulary: Option<&[String]>,
) -> Result<Dataset, DataError> {
    read_csv(File::open(path)?, schema, vocabulary)
}

/// Reads trajectories from CSV.
///
/// Rows are grouped by trajectory id in order of first appearance; within a
/// trajectory, file order is kept unless the schema's `seq` column is
/// present, in which case points are sorted by it. Without an explicit
/// vocabulary, category tokens that are all non-negative integers map to
/// themselves; otherwise names are indexed in first-appearance order. With a
/// vocabulary, tokens must be a listed name or an integer index into it.
pub fn read_csv<R: Read>(
    reader: R,
    schema: &CsvSchema,
    vocabulary: Option<&[String]>,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx_tid = column(&headers, &schema.tid)?;
    let idx_uid = column(&headers, &schema.uid)?;
    let idx_lat = column(&headers, &schema.lat)?;
    let idx_lon = column(&headers, &schema.lon)?;
    let idx_day = column(&headers, &schema.day)?;
    let idx_hour = column(&headers, &schema.hour)?;
    let idx_cat = column(&headers, &schema.category)?;
    let idx_seq = schema
        .seq
        .as_ref()
        .and_then(|s| headers.iter().position(|h| h.trim() == s));

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("");
        let lat: f64 = parse_field(get(idx_lat), line, "lat")?;
        let lon: f64 = parse_field(get(idx_lon), line, "lon")?;
        let day = parse_day(get(idx_day)).ok_or_else(|| DataError::Validation {
            line,
            field: "day".into(),
            message: format!("`{}` is not 0-6 or a weekday name", get(idx_day)),
        })?;
        let hour: i64 = parse_field(get(idx_hour), line, "hour")?;
        let invalid = |field: &str, message: String| DataError::Validation {
            line,
            field: field.into(),
            message,
        };
        if !(0..24).contains(&hour) {
            return Err(invalid("hour", format!("{hour} outside 0..=23")));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(invalid("lat", format!("{lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(invalid("lon", format!("{lon} outside [-180, 180]")));
        }
        rows.push(RawRow {
            line,
            tid: parse_field(get(idx_tid), line, "tid")?,
            uid: parse_field(get(idx_uid), line, "uid")?,
            lat,
            lon,
            day,
            hour: hour as u8,
            category: get(idx_cat).trim().to_string(),
            seq: idx_seq.map(|i| parse_field(get(i), line, "seq")).transpose()?,
        });
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }

    let (vocab, resolve) = build_vocabulary(&rows, vocabulary)?;

    let mut order: Vec<u64> = Vec::new();
    let mut groups: HashMap<u64, (u64, Vec<(Option<i64>, TrajectoryPoint)>)> = HashMap::new();
    for row in &rows {
        let category = resolve(&row.category).ok_or_else(|| DataError::Validation {
            line: row.line,
            field: "category".into(),
            message: format!("`{}` is not in the category vocabulary", row.category),
        })?;
        let point = TrajectoryPoint::new(row.lat, row.lon, row.day, row.hour, category);
        let entry = groups.entry(row.tid).or_insert_with(|| {
            order.push(row.tid);
            (row.uid, Vec::new())
        });
        if entry.0 != row.uid {
            return Err(DataError::Validation {
                line: row.line,
                field: "uid".into(),
                message: format!(
                    "trajectory {} already belongs to user {}, found {}",
                    row.tid, entry.0, row.uid
                ),
            });
        }
        entry.1.push((row.seq, point));
    }
    let trajectories = order
        .into_iter()
        .map(|tid| {
            let (uid, mut pts) = groups.remove(&tid).expect("grouped above");
            if pts.iter().all(|(s, _)| s.is_some()) {
                pts.sort_by_key(|(s, _)| *s);
            }
            Trajectory {
                tid,
                uid,
                points: pts.into_iter().map(|(_, p)| p).collect(),
            }
        })
        .collect();
    Dataset::new(trajectories, vocab)
}

type Resolver = Box<dyn Fn(&str) -> Option<usize>>;

fn build_vocabulary(rows: &[RawRow], fixed: Option<&[String]>) -> Result<(Vec<String>, Resolver), DataError> {
    if let Some(vocab) = fixed {
        let vocab = vocab.to_vec();
        let lookup: HashMap<String, usize> =
            vocab.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let size = vocab.len();
        let resolve: Resolver = Box::new(move |tok: &str| {
            lookup
                .get(tok)
                .copied()
                .or_else(|| tok.parse::<usize>().ok().filter(|&i| i < size))
        });
        return Ok((vocab, resolve));
    }
    let integers: Option<Vec<usize>> = rows.iter().map(|r| r.category.parse::<usize>().ok()).collect();
    let vocab: Vec<String> = match integers {
        Some(ints) => {
            let max = ints.iter().copied().max().unwrap_or(0);
            (0..=max).map(|i| i.to_string()).collect()
        }
        None => {
            let mut seen = BTreeSet::new();
            rows.iter()
                .filter(|r| seen.insert(r.category.clone()))
                .map(|r| r.category.clone())
                .collect()
        }
    };
    let lookup: HashMap<String, usize> =
        vocab.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    Ok((vocab, Box::new(move |tok: &str| lookup.get(tok).copied())))
}

/// Reads a vocabulary file: one category name per line, index = line number.
pub fn read_vocabulary(path: impl AsRef<Path>) -> Result<Vec<String>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut names = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let name = line.trim_end_matches('\r');
        if !name.is_empty() {
            names.push(name.to_string());
        }
    }
    Ok(names)
}

/// Writes trajectories in the standard `tid,uid,lat,lon,day,hour,category` schema.
///
/// Coordinates use the shortest representation that parses back to the same
/// `f64`, so a write/read cycle is lossless.
pub fn write_csv<W: Write>(
    writer: W,
    trajectories: &[Trajectory],
    category_vocab: &[String],
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tid", "uid", "lat", "lon", "day", "hour", "category"])?;
    for t in trajectories {
        for p in &t.points {
            let cat = category_vocab
                .get(p.category)
                .cloned()
                .unwrap_or_else(|| p.category.to_string());
            w.write_record([
                t.tid.to_string(),
                t.uid.to_string(),
                p.lat.to_string(),
                p.lon.to_string(),
                p.day.to_string(),
                p.hour.to_string(),
                cat,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Assigns whole trajectories to train/test by a seeded shuffle of their ids.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Parameter(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut tids: Vec<u64> = ds.trajectories.iter().map(|t| t.tid).collect();
    let n_train = (train_fraction * tids.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tids.shuffle(&mut rng);
    let mut out = ds.clone();
    for (i, tid) in tids.into_iter().enumerate() {
        out.split
            .insert(tid, if i < n_train { Split::Train } else { Split::Test });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub trajectories: usize,
    pub points: usize,
    pub lat_range: (f64, f64),
    pub lon_range: (f64, f64),
    pub day_vocab: usize,
    pub hour_vocab: usize,
    pub category_vocab: usize,
    pub max_length: usize,
    pub train_trajectories: usize,
    pub test_trajectories: usize,
}

pub fn summarize(ds: &Dataset) -> DatasetSummary {
    let mut lat = (f64::INFINITY, f64::NEG_INFINITY);
    let mut lon = (f64::INFINITY, f64::NEG_INFINITY);
    for p in ds.trajectories.iter().flat_map(|t| &t.points) {
        lat = (lat.0.min(p.lat), lat.1.max(p.lat));
        lon = (lon.0.min(p.lon), lon.1.max(p.lon));
    }
    let train = ds.split.values().filter(|s| **s == Split::Train).count();
    DatasetSummary {
        users: ds.users().len(),
        trajectories: ds.trajectories.len(),
        points: ds.point_count(),
        lat_range: lat,
        lon_range: lon,
        day_vocab: DAYS,
        hour_vocab: HOURS,
        category_vocab: ds.categories(),
        max_length: ds.max_length,
        train_trajectories: train,
        test_trajectories: ds.trajectories.len() - train,
    }
}
