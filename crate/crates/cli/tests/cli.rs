use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trajshield::data::{load_csv, split_dataset, write_csv, CsvSchema, Dataset, Split};
use trajshield::eval::{tul_metrics, TulModel};
use trajshield::geomask::haversine_km;
use trajshield::planted::{planted_dataset, PlantedConfig};
use trajshield::trajgan::checkpoint_load;

struct Workspace {
    dir: tempfile::TempDir,
    data: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PlantedConfig {
            clusters: 2,
            users_per_cluster: 2,
            trajectories_per_user: 6,
            ..PlantedConfig::default()
        };
        let ds = planted_dataset(&cfg).unwrap();
        let data = dir.path().join("data.csv");
        write_csv(std::fs::File::create(&data).unwrap(), ds.trajectories(), ds.category_vocab()).unwrap();
        Self { dir, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_trajshield"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    /// Runs with `--data` set and asserts success.
    fn ok(&self, command: &str, args: &[&str]) -> Output {
        let mut all = vec![command, "--data", self.data.to_str().unwrap()];
        all.extend_from_slice(args);
        let out = self.run(&all);
        assert!(out.status.success(), "{command} failed: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn dataset(&self) -> Dataset {
        let ds = load_csv(&self.data, &CsvSchema::default(), None).unwrap();
        split_dataset(&ds, 2.0 / 3.0, 1).unwrap()
    }

    fn train(&self, out: &str, extra: &[&str]) {
        let mut args = vec!["--epochs", "2", "--seed", "1", "--units", "8", "--spatial-embed", "4", "--out", out];
        args.extend_from_slice(extra);
        self.ok("train", &args);
    }
}

const SMALL_TUL: [&str; 6] = ["--tul-epochs", "5", "--tul-units", "8", "--tul-spatial-embed", "4"];

fn manifest(path: &Path) -> serde_json::Value {
    let name = format!("{}.manifest.json", path.file_name().unwrap().to_string_lossy());
    serde_json::from_str(&std::fs::read_to_string(path.with_file_name(name)).unwrap()).unwrap()
}

fn read(path: &Path, ds: &Dataset) -> Dataset {
    load_csv(path, &CsvSchema::default(), Some(ds.category_vocab())).unwrap()
}

#[test]
fn train_writes_checkpoint_history_and_manifest() {
    let w = Workspace::new();
    w.train("m.ckpt", &[]);
    let ckpt = checkpoint_load(w.path("m.ckpt")).unwrap();
    assert_eq!(ckpt.history.len(), 2);
    assert_eq!(ckpt.metadata["split_seed"], "1");
    let history = std::fs::read_to_string(w.path("m.ckpt.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let m = manifest(&w.path("m.ckpt"));
    assert_eq!(m["command"], "train");
    assert_eq!(m["config"]["epochs"], "2");
    assert_eq!(m["config"]["beta"], "10");
    assert_eq!(m["seeds"]["training"], 1);
    assert_eq!(m["dataset"]["trajectories"], 24);
    assert!(m["duration_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn training_is_reproducible_byte_for_byte() {
    let w = Workspace::new();
    w.train("a.ckpt", &[]);
    w.train("b.ckpt", &[]);
    for suffix in ["", ".history.csv"] {
        let a = std::fs::read(w.path(&format!("a.ckpt{suffix}"))).unwrap();
        let b = std::fs::read(w.path(&format!("b.ckpt{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
}

#[test]
fn loss_weights_flag_sets_the_ablation() {
    let w = Workspace::new();
    w.train("m.ckpt", &["--loss-weights", "1,0,1,1"]);
    assert_eq!(checkpoint_load(w.path("m.ckpt")).unwrap().config.weights.beta, 0.0);
    assert_eq!(manifest(&w.path("m.ckpt"))["config"]["beta"], "0");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let w = Workspace::new();
    std::fs::write(w.path("run.cfg"), "epochs = 3\nunits = 8\nspatial_embed = 4\nlr = 0.01\n").unwrap();
    w.ok("train", &["--config", "run.cfg", "--epochs", "1", "--out", "m.ckpt"]);
    let ckpt = checkpoint_load(w.path("m.ckpt")).unwrap();
    assert_eq!((ckpt.config.epochs, ckpt.config.lr, ckpt.config.units), (1, 0.01, 8));

    std::fs::write(w.path("bad.cfg"), "epochz = 3\n").unwrap();
    let out = w.run(&["train", "--data", "data.csv", "--config", "bad.cfg", "--out", "x.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}

#[test]
fn usage_errors_exit_with_two() {
    let w = Workspace::new();
    let out = w.run(&["train", "--data", "nowhere.csv", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));

    let out = w.run(&["mask", "--data", "data.csv", "--method", "nonsense", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rp, gaussian"));

    let out = w.run(&["train", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_trajshield"))
        .args(["ingest-check", "--data", w.data.to_str().unwrap()])
        .env("TRAJSHIELD_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!w.path("x.csv").exists());
}

#[test]
fn ingest_check_reports_the_summary() {
    let w = Workspace::new();
    let out = w.ok("ingest-check", &["--out", "summary.json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["summary"]["users"], 4);
    assert_eq!(v["summary"]["trajectories"], 24);
    assert_eq!(v["summary"]["train_trajectories"], 16);
    assert!(w.path("summary.json.manifest.json").exists());
}

#[test]
fn generation_follows_the_split_and_noise_seed() {
    let w = Workspace::new();
    let ds = w.dataset();
    w.train("m.ckpt", &[]);
    for (out, seed) in [("a.csv", "4"), ("b.csv", "4"), ("c.csv", "5")] {
        w.ok("generate", &["--checkpoint", "m.ckpt", "--noise-seed", seed, "--out", out]);
    }
    let a = std::fs::read(w.path("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(w.path("b.csv")).unwrap());
    assert_ne!(a, std::fs::read(w.path("c.csv")).unwrap());

    let test = ds.split_trajectories(Split::Test);
    let syn = read(&w.path("a.csv"), &ds);
    assert_eq!(syn.point_count(), test.iter().map(|t| t.len()).sum::<usize>());

    w.ok("generate", &["--checkpoint", "m.ckpt", "--split", "train", "--out", "train.csv"]);
    let tids = |d: &Dataset| d.trajectories().iter().map(|t| t.tid).collect::<BTreeSet<_>>();
    let train_syn = read(&w.path("train.csv"), &ds);
    assert!(tids(&train_syn).is_disjoint(&tids(&syn)));
    assert_eq!(manifest(&w.path("a.csv"))["seeds"]["noise"], 4);
}

#[test]
fn masking_respects_the_radius() {
    let w = Workspace::new();
    let ds = w.dataset();
    w.ok("mask", &["--method", "rp", "--radius-km", "1", "--split", "all", "--out", "rp.csv"]);
    let masked = read(&w.path("rp.csv"), &ds);
    for (a, b) in ds.trajectories().iter().zip(masked.trajectories()) {
        assert_eq!((a.tid, a.len()), (b.tid, b.len()));
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(haversine_km((p.lat, p.lon), (q.lat, q.lon)) <= 1.0);
            assert_eq!((p.day, p.hour), (q.day, q.hour));
        }
    }
    w.ok("mask", &["--method", "gaussian", "--sigma-deg", "0.001", "--temporal", "--out", "g.csv"]);
    let m = manifest(&w.path("g.csv"));
    assert_eq!(m["config"]["method"], "gaussian");
    assert_eq!(m["config"]["temporal"], "true");
    assert_eq!(m["config"]["split"], "test");
}

fn write_subset(path: &Path, ds: &Dataset, keep: impl Fn(u64) -> bool) {
    let t: Vec<_> = ds.trajectories().iter().filter(|t| keep(t.tid)).cloned().collect();
    write_csv(std::fs::File::create(path).unwrap(), &t, ds.category_vocab()).unwrap();
}

fn report_file(path: &Path) -> Vec<serde_json::Value> {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluation_against_itself() {
    let w = Workspace::new();
    let ds = w.dataset();
    let mut args = vec!["--out", "tul.model"];
    args.extend_from_slice(&SMALL_TUL);
    w.ok("tul-train", &args);
    let data = format!("Original={}", w.data.display());
    w.ok("evaluate", &["--tul", "tul.model", "--candidate", &data, "--split", "all", "--out", "self.json"]);
    let r = &report_file(&w.path("self.json"))[0];
    assert_eq!(r["name"], "Original");
    let model = TulModel::read(std::fs::File::open(w.path("tul.model")).unwrap()).unwrap();
    let expected = tul_metrics(&model, ds.trajectories()).unwrap();
    assert_eq!(r["report"]["acc1"].as_f64().unwrap(), expected.acc1);
    assert_eq!(r["report"]["hausdorff"]["mean"].as_f64().unwrap(), 0.0);
    assert_eq!(r["report"]["jaccard"]["mean"].as_f64().unwrap(), 1.0);
}

#[test]
fn evaluation_compares_candidates_and_reports() {
    let w = Workspace::new();
    let ds = w.dataset();
    let test: BTreeSet<u64> = ds.split_trajectories(Split::Test).iter().map(|t| t.tid).collect();
    write_subset(&w.path("test.csv"), &ds, |tid| test.contains(&tid));
    w.ok("mask", &["--method", "rp", "--out", "rp.csv"]);
    w.ok("mask", &["--method", "gaussian", "--temporal", "--out", "g.csv"]);
    let mut args = vec!["--candidate", "Original=test.csv", "--candidate", "rp.csv", "--candidate", "Gauss=g.csv", "--out", "cmp.json"];
    args.extend_from_slice(&SMALL_TUL);
    let out = w.ok("evaluate", &args);

    let table = std::fs::read_to_string(w.path("cmp.json.comparison.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], "Method,ACC@1,ACC@5,Macro-F1,Macro-P,Macro-R");
    let names: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(names, ["Original", "rp", "Gauss"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
    let m = manifest(&w.path("cmp.json"));
    assert_eq!(m["config"]["tul_epochs"], "5");
    assert!(m["inputs"]["candidate.Gauss"].as_str().unwrap().ends_with("g.csv"));

    let dir = w.path("figures");
    let out = w.run(&["report", "--reports", "cmp.json", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hourly = std::fs::read_to_string(dir.join("hourly.csv")).unwrap();
    assert_eq!(hourly.lines().next().unwrap(), "hour,Original,rp,Gauss");
    assert_eq!(hourly.lines().count(), 25);
    for name in ["comparison.csv", "metrics.csv", "categories.csv", "temporal_2_Gauss.csv", "manifest.json"] {
        assert!(dir.join(name).exists(), "{name}");
    }
}

#[test]
fn missing_candidate_trajectory_is_named() {
    let w = Workspace::new();
    let ds = w.dataset();
    let test: Vec<u64> = ds.split_trajectories(Split::Test).iter().map(|t| t.tid).collect();
    let dropped = test[0];
    write_subset(&w.path("partial.csv"), &ds, |tid| tid != dropped && test.contains(&tid));
    let mut args = vec!["evaluate", "--data", "data.csv", "--candidate", "partial.csv", "--out", "x.json"];
    args.extend_from_slice(&SMALL_TUL);
    let out = w.run(&args);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("trajectory {dropped}")), "{err}");
    assert!(!w.path("x.json").exists());
}
