use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajshield::data::{
    load_csv, read_vocabulary, split_dataset, summarize, write_csv, CsvSchema, Dataset, Split, Trajectory,
};
use trajshield::eval::{comparison_table, evaluate_all, matrix_csv, train_tul, tul_metrics, EvaluationReport, TulModel};
use trajshield::geomask::mask_dataset;
use trajshield::trajgan::{checkpoint_load, generate_synthetic, history_csv, train_gan, write_checkpoint, Checkpoint};

use crate::config::{mask_pairs, tul_pairs, Settings, DEFAULT_SPLIT_SEED, DEFAULT_TRAIN_FRACTION};
use crate::output::{sibling, write_atomic, write_text, Manifest};
use crate::{CliError, DataArgs};

type Flags<'a> = [(&'a str, Option<String>)];

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Loads the dataset, applies the train/test split and records both in the
/// manifest. `split_defaults` overrides the built-in split parameters.
fn load(
    args: &DataArgs,
    flags: &Flags,
    split_defaults: Option<(u64, f64)>,
    m: &mut Manifest,
) -> Result<(Dataset, Settings), CliError> {
    let mut all: Vec<(&str, Option<String>)> = flags.to_vec();
    all.push(("split_seed", args.split_seed.map(|v| v.to_string())));
    all.push(("train_fraction", args.train_fraction.map(|v| v.to_string())));
    let settings = Settings::load(args.config.as_deref(), &all)?;
    let (seed0, fraction0) = split_defaults.unwrap_or((DEFAULT_SPLIT_SEED, DEFAULT_TRAIN_FRACTION));
    let split_seed = settings.parse_or("split_seed", seed0)?;
    let fraction = settings.parse_or("train_fraction", fraction0)?;

    require_file(&args.data, "data file")?;
    let vocab = match &args.vocab {
        Some(p) => {
            require_file(p, "vocabulary file")?;
            m.input("vocab", p);
            Some(read_vocabulary(p)?)
        }
        None => None,
    };
    let ds = load_csv(&args.data, &CsvSchema::default(), vocab.as_deref())?;
    let ds = split_dataset(&ds, fraction, split_seed).map_err(|e| CliError::Usage(e.to_string()))?;

    m.input("data", &args.data);
    if let Some(c) = &args.config {
        m.input("config", c);
    }
    m.config([
        ("split_seed".to_string(), split_seed.to_string()),
        ("train_fraction".to_string(), fraction.to_string()),
    ]);
    m.seed("split", split_seed);
    m.dataset = Some(summarize(&ds));
    Ok((ds, settings))
}

fn select(ds: &Dataset, settings: &Settings, default: &str, m: &mut Manifest) -> Result<Vec<Trajectory>, CliError> {
    let which = settings.get("split").unwrap_or(default).to_string();
    m.config([("split".to_string(), which.clone())]);
    Ok(match which.as_str() {
        "all" => ds.trajectories().to_vec(),
        other => {
            let split: Split = other.parse().map_err(|e: trajshield::data::DataError| CliError::Usage(e.to_string()))?;
            ds.split_trajectories(split)
        }
    })
}

fn write_trajectories(path: &Path, trajectories: &[Trajectory], vocab: &[String]) -> Result<(), CliError> {
    write_atomic(path, |w| Ok(write_csv(w, trajectories, vocab)?))
}

pub fn ingest_check(args: &DataArgs, out: Option<&Path>) -> Result<(), CliError> {
    let mut m = Manifest::start("ingest-check");
    let (ds, _) = load(args, &[], None, &mut m)?;
    let report = serde_json::json!({
        "summary": summarize(&ds),
        "categories": ds.category_vocab(),
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    print!("{text}");
    if let Some(out) = out {
        write_text(out, &text)?;
        m.output("summary", out);
        m.finish(&sibling(out, ".manifest.json"))?;
    }
    Ok(())
}

pub fn train(args: &DataArgs, out: &Path, flags: &Flags) -> Result<(), CliError> {
    let mut m = Manifest::start("train");
    let (ds, settings) = load(args, flags, None, &mut m)?;
    let cfg = settings.training()?;
    let mut ckpt = train_gan(&ds, &cfg)?;
    ckpt.metadata.extend([
        ("split_seed".to_string(), m.config["split_seed"].clone()),
        ("train_fraction".to_string(), m.config["train_fraction"].clone()),
        ("data".to_string(), args.data.display().to_string()),
    ]);
    write_atomic(out, |w| Ok(write_checkpoint(&ckpt, w)?))?;
    let history = sibling(out, ".history.csv");
    write_text(&history, &history_csv(&ckpt.history))?;

    if let Some(last) = ckpt.history.last() {
        eprintln!(
            "trained {} epochs: discriminator loss {:.4}, generator loss {:.4}",
            last.epoch, last.d_loss, last.g_loss
        );
    }
    m.config(cfg.to_pairs());
    m.seed("training", cfg.seed);
    m.output("checkpoint", out);
    m.output("history", &history);
    m.finish(&sibling(out, ".manifest.json"))
}

/// Split parameters a checkpoint was trained with, if recorded.
fn split_of_checkpoint(ckpt: &Checkpoint) -> Option<(u64, f64)> {
    let seed = ckpt.metadata.get("split_seed")?.parse().ok()?;
    let fraction = ckpt.metadata.get("train_fraction")?.parse().ok()?;
    Some((seed, fraction))
}

pub fn generate(args: &DataArgs, checkpoint: &Path, out: &Path, flags: &Flags) -> Result<(), CliError> {
    let mut m = Manifest::start("generate");
    require_file(checkpoint, "checkpoint")?;
    let ckpt = checkpoint_load(checkpoint)?;
    let (ds, settings) = load(args, flags, split_of_checkpoint(&ckpt), &mut m)?;
    let trajectories = select(&ds, &settings, "test", &mut m)?;
    let noise_seed = settings.parse_or("noise_seed", 0u64)?;
    let synthetic = generate_synthetic(&trajectories, &ckpt, ds.category_vocab(), noise_seed)?;
    write_trajectories(out, &synthetic, ds.category_vocab())?;

    m.input("checkpoint", checkpoint);
    m.config([("noise_seed".to_string(), noise_seed.to_string())]);
    m.config(ckpt.config.to_pairs());
    m.seed("noise", noise_seed);
    m.output("synthetic", out);
    m.finish(&sibling(out, ".manifest.json"))
}

pub fn mask(args: &DataArgs, out: &Path, flags: &Flags) -> Result<(), CliError> {
    let mut m = Manifest::start("mask");
    let settings = Settings::load(args.config.as_deref(), flags)?;
    // reject a bad method before touching the data
    let cfg = settings.mask()?;
    let (ds, settings) = load(args, flags, None, &mut m)?;
    let trajectories = select(&ds, &settings, "test", &mut m)?;
    let masked = mask_dataset(&trajectories, &cfg)?;
    write_trajectories(out, &masked, ds.category_vocab())?;

    m.config(mask_pairs(&cfg));
    m.seed("mask", cfg.seed);
    m.output("masked", out);
    m.finish(&sibling(out, ".manifest.json"))
}

fn train_linker(ds: &Dataset, settings: &Settings, m: &mut Manifest) -> Result<(TulModel, Vec<f64>), CliError> {
    let cfg = settings.tul()?;
    let train = ds.split_trajectories(Split::Train);
    let trained = train_tul(&train, ds.centroid(), ds.categories(), &cfg)?;
    m.config(tul_pairs(&cfg));
    m.seed("tul", cfg.seed);
    Ok(trained)
}

pub fn tul_train(args: &DataArgs, out: &Path, flags: &Flags) -> Result<(), CliError> {
    let mut m = Manifest::start("tul-train");
    let (ds, settings) = load(args, flags, None, &mut m)?;
    let (model, losses) = train_linker(&ds, &settings, &mut m)?;
    write_atomic(out, |w| Ok(model.write(w)?))?;
    let history = sibling(out, ".history.csv");
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    write_text(&history, &csv)?;

    let train_acc = tul_metrics(&model, &ds.split_trajectories(Split::Train))?.acc1;
    eprintln!("training ACC@1 {train_acc:.3}");
    m.output("model", out);
    m.output("history", &history);
    m.finish(&sibling(out, ".manifest.json"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    pub report: EvaluationReport,
}

fn parse_candidate(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(spec);
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.to_string());
            (name, path)
        }
    }
}

fn metrics_csv(reports: &[NamedReport]) -> String {
    let mut out = String::new();
    for (i, r) in reports.iter().enumerate() {
        let csv = r.report.to_csv();
        let (header, values) = csv.trim_end().split_once('\n').unwrap_or_default();
        if i == 0 {
            out.push_str(&format!("method,{header}\n"));
        }
        out.push_str(&format!("{},{values}\n", csv_name(&r.name)));
    }
    out
}

fn csv_name(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn table_rows(reports: &[NamedReport]) -> Vec<(String, EvaluationReport)> {
    reports.iter().map(|r| (r.name.clone(), r.report.clone())).collect()
}

pub fn evaluate(
    args: &DataArgs,
    candidates: &[String],
    tul: Option<&Path>,
    out: &Path,
    flags: &Flags,
) -> Result<(), CliError> {
    let mut m = Manifest::start("evaluate");
    let candidates: Vec<(String, PathBuf)> = candidates.iter().map(|c| parse_candidate(c)).collect();
    for (_, path) in &candidates {
        require_file(path, "candidate file")?;
    }
    if let Some(p) = tul {
        require_file(p, "user-linking model")?;
    }
    let (ds, settings) = load(args, flags, None, &mut m)?;
    let original = select(&ds, &settings, "test", &mut m)?;
    let model = match tul {
        Some(p) => {
            m.input("tul", p);
            let model = TulModel::read(std::io::BufReader::new(File::open(p)?))?;
            if model.categories() != ds.categories() {
                return Err(CliError::Runtime(format!(
                    "user-linking model expects {} categories but the dataset has {}",
                    model.categories(),
                    ds.categories()
                )));
            }
            model
        }
        None => train_linker(&ds, &settings, &mut m)?.0,
    };

    let mut reports = Vec::new();
    for (name, path) in &candidates {
        let candidate = load_csv(path, &CsvSchema::default(), Some(ds.category_vocab()))?;
        let report = evaluate_all(&original, candidate.trajectories(), &model)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        m.input(&format!("candidate.{name}"), path);
        reports.push(NamedReport {
            name: name.clone(),
            report,
        });
    }
    write_text(out, &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    let table = sibling(out, ".comparison.csv");
    let table_text = comparison_table(&table_rows(&reports));
    write_text(&table, &table_text)?;
    let metrics = sibling(out, ".metrics.csv");
    write_text(&metrics, &metrics_csv(&reports))?;
    print!("{table_text}");

    m.output("report", out);
    m.output("comparison", &table);
    m.output("metrics", &metrics);
    m.finish(&sibling(out, ".manifest.json"))
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Columns of per-method series, one row per index.
fn series_csv(index_name: &str, labels: &[String], reports: &[NamedReport], pick: impl Fn(&EvaluationReport) -> &[f64]) -> String {
    let mut out = String::from(index_name);
    for r in reports {
        out.push(',');
        out.push_str(&csv_name(&r.name));
    }
    out.push('\n');
    for (i, label) in labels.iter().enumerate() {
        out.push_str(&csv_name(label));
        for r in reports {
            out.push_str(&format!(",{}", pick(&r.report).get(i).copied().unwrap_or(0.0)));
        }
        out.push('\n');
    }
    out
}

pub fn report(paths: &[PathBuf], vocab: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::start("report");
    let mut reports: Vec<NamedReport> = Vec::new();
    for p in paths {
        require_file(p, "report file")?;
        let text = std::fs::read_to_string(p)?;
        let mut batch: Vec<NamedReport> = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{} is not an evaluation report: {e}", p.display())))?;
        reports.append(&mut batch);
        m.input(&format!("report.{}", m.inputs.len()), p);
    }
    let categories = reports.iter().map(|r| r.report.category_freq.len()).max().unwrap_or(0);
    let names = match vocab {
        Some(p) => {
            require_file(p, "vocabulary file")?;
            m.input("vocab", p);
            let names = read_vocabulary(p)?;
            if names.len() != categories {
                return Err(CliError::Usage(format!(
                    "vocabulary has {} names but the reports have {categories} categories",
                    names.len()
                )));
            }
            names
        }
        None => (0..categories).map(|c| c.to_string()).collect(),
    };
    std::fs::create_dir_all(out)?;

    let table = comparison_table(&table_rows(&reports));
    let mut files = vec![
        ("comparison.csv".to_string(), table.clone()),
        ("metrics.csv".to_string(), metrics_csv(&reports)),
    ];
    let hours: Vec<String> = (0..trajshield::data::HOURS).map(|h| h.to_string()).collect();
    files.push(("hourly.csv".into(), series_csv("hour", &hours, &reports, |r| &r.hourly_freq)));
    files.push(("categories.csv".into(), series_csv("category", &names, &reports, |r| &r.category_freq)));
    for (i, r) in reports.iter().enumerate() {
        files.push((
            format!("temporal_{i}_{}.csv", file_safe(&r.name)),
            matrix_csv(&r.report.temporal_matrix, &names),
        ));
    }
    for (name, text) in &files {
        let path = out.join(name);
        write_text(&path, text)?;
        m.output(name, &path);
    }
    print!("{table}");
    m.finish(&out.join("manifest.json"))
}
