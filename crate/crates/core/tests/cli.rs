use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dfmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfmdp")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = dfmdp(&["generate", "--domain", "gridworld", "--regime", "random", "--seed", seed, "--trajectories", "20", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.json", "4");
    let b = generate(dir.path(), "b.json", "4");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("a.json.config.json").exists());

    let again = dfmdp(&["generate", "--domain", "gridworld", "--regime", "random", "--seed", "5", "--out", p(&a)]);
    assert_eq!(code(&again), 1);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let forced = dfmdp(&["generate", "--domain", "gridworld", "--regime", "random", "--seed", "5", "--trajectories", "20", "--force", "--out", p(&a)]);
    assert_eq!(code(&forced), 0);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let ds = read_json(&b);
    assert_eq!(ds["entries"].as_array().unwrap().len(), 10);
    let step = &ds["entries"][0]["trajectories"][0]["steps"][0];
    assert_eq!(step["behavior_prob"].as_f64().unwrap(), 0.2);
}

#[test]
fn usage_and_runtime_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), "d.json", "0");
    assert_eq!(code(&dfmdp(&["train", "--dataset", p(&ds), "--method", "nope", "--out", "x"])), 2);
    assert_eq!(code(&dfmdp(&["generate", "--domain", "maze", "--regime", "random", "--out", "x"])), 2);
    assert_eq!(code(&dfmdp(&["frobnicate"])), 2);
    assert_eq!(code(&dfmdp(&["train", "--dataset", "/nonexistent/d.json", "--out", p(&dir.path().join("r"))])), 1);
    assert_eq!(code(&dfmdp(&["train", "--dataset", p(&ds), "--epochs", "0", "--out", p(&dir.path().join("r"))])), 1);
    let threads = Command::new(env!("CARGO_BIN_EXE_dfmdp")).env("DFMDP_THREADS", "many").args(["table", "--runs", "."]).output().unwrap();
    assert_eq!(code(&threads), 2);
}

#[test]
fn train_writes_a_self_contained_run_that_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), "d.json", "1");
    let run = dir.path().join("ts");
    let o = dfmdp(&["train", "--dataset", p(&ds), "--method", "ts", "--epochs", "2", "--seed", "3", "--out", p(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.json", "model.json", "log.csv", "result.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let cfg = read_json(&run.join("config.json"));
    assert_eq!(cfg["command"], "train");
    assert_eq!(cfg["train"]["seed"], 3);
    assert_eq!(cfg["train"]["k"], 100);
    let sha = cfg["dataset_sha256"].as_str().unwrap();
    assert_eq!(sha, dfmdp::harness::sha256_file(&ds).unwrap());
    // two-stage runs never time a backward pass
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    assert!(log.lines().skip(1).all(|l| l.split(',').nth(5) == Some("")));

    let replay = dir.path().join("replay");
    let o = dfmdp(&["train", "--config", p(&run.join("config.json")), "--out", p(&replay)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(run.join("model.json")).unwrap(), std::fs::read(replay.join("model.json")).unwrap());
    assert_eq!(read_json(&run.join("result.json")), read_json(&replay.join("result.json")));

    // replay into an occupied directory needs --force; a changed dataset is refused
    assert_eq!(code(&dfmdp(&["train", "--config", p(&run.join("config.json")), "--out", p(&replay)])), 1);
    generate(dir.path(), "d2.json", "2");
    std::fs::copy(dir.path().join("d2.json"), &ds).unwrap();
    let o = dfmdp(&["train", "--config", p(&run.join("config.json")), "--out", p(&replay), "--force"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sha256"));
}

#[test]
fn decision_focused_run_logs_backward_timing() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), "d.json", "1");
    let run = dir.path().join("pgw");
    let o = dfmdp(&["train", "--dataset", p(&ds), "--method", "pg-w", "--epochs", "1", "--k", "10", "--out", p(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    let train_rows: Vec<&str> = log.lines().filter(|l| l.contains(",train,")).collect();
    assert_eq!(train_rows.len(), 7);
    assert!(train_rows.iter().all(|l| l.split(',').nth(5).unwrap().parse::<f64>().unwrap() >= 0.0));
    assert_eq!(read_json(&run.join("config.json"))["train"]["method"], "pg-w");
}

#[test]
fn table_matches_an_independent_aggregation() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), "d.json", "6");
    let runs = dir.path().join("runs");
    for (method, seeds) in [("ts", "0,1,2"), ("pg-id", "0")] {
        let o = dfmdp(&["train", "--dataset", p(&ds), "--method", method, "--epochs", "1", "--k", "10", "--seed", seeds, "--out", p(&runs.join(method))]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv_path = dir.path().join("table.csv");
    let o = dfmdp(&["table", "--runs", p(&runs), "--out", p(&csv_path)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing cell: gridworld random pg-w"));

    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["domain", "regime", "method", "n_seeds", "mean", "stderr", "lambda_ess", "selection", "missing"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let methods: Vec<&str> = rows.iter().map(|r| &r[2]).collect();
    assert_eq!(methods, ["ts", "pg-id", "bellman-id", "pg-w", "bellman-w"]);

    // recompute from the raw per-run results
    let scores = |m: &str| -> Vec<f64> {
        let mut v = Vec::new();
        for e in walk(&runs.join(m)) {
            if e.file_name().unwrap() == "result.json" {
                v.push(read_json(&e)["test"]["mean"].as_f64().unwrap());
            }
        }
        v
    };
    let ts = scores("ts");
    assert_eq!(ts.len(), 3);
    let mean = ts.iter().sum::<f64>() / 3.0;
    let sd = (ts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    let row = &rows[0];
    assert_eq!(&row[3], "3");
    assert!((row[4].parse::<f64>().unwrap() - mean).abs() < 1e-9);
    assert!((row[5].parse::<f64>().unwrap() - sd / 3f64.sqrt()).abs() < 1e-9);
    assert_eq!(&row[7], "best_validation");
    // a single run has zero stderr
    assert_eq!(&rows[1][3], "1");
    assert_eq!(rows[1][5].parse::<f64>().unwrap(), 0.0);
    assert_eq!(&rows[2][8], "true");

    assert_eq!(code(&dfmdp(&["table", "--runs", p(&dir.path().join("nothing"))])), 1);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn runtime_and_sweep_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let timing = dir.path().join("t.csv");
    let o = dfmdp(&["runtime", "--strategy", "identity,woodbury", "--sizes", "3,4", "--k", "5", "--reps", "1", "--out", p(&timing)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&timing).unwrap();
    assert!(text.starts_with("strategy,size,n,k,median_ms,status"));
    assert_eq!(text.lines().count(), 5);
    assert_eq!(code(&dfmdp(&["runtime", "--strategy", "dense"])), 2);

    let ds = generate(dir.path(), "d.json", "2");
    let out = dir.path().join("sweep");
    let o = dfmdp(&["sweep", "--dataset", p(&ds), "--method", "pg-id", "--epochs", "1", "--k", "10", "--values", "0,1", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(out.join("sweep.csv")).unwrap().records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(read_json(&out.join("config.json"))["command"], "sweep");
}
