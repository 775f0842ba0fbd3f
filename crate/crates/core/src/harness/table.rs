use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::training::{mean_stderr, SplitEval, TrainConfig};
use crate::Error;

pub const RESULT_FILE: &str = "result.json";

/// Outcome of one training run, stored beside its log and checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub domain: String,
    pub regime: String,
    pub method: String,
    pub seed: u64,
    pub lambda_ess: f64,
    pub selection: String,
    pub chosen_epoch: usize,
    pub test: SplitEval,
    pub config: TrainConfig,
    pub dataset_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub domain: String,
    pub regime: String,
    pub method: String,
    pub n_seeds: usize,
    /// Mean over seeds of each run's mean test score.
    pub mean: f64,
    /// Standard error across seeds; 0 for a single run.
    pub stderr: f64,
    pub lambda_ess: String,
    pub selection: String,
    pub missing: bool,
}

/// Method rows in display order.
pub const TABLE_METHODS: [&str; 5] = ["ts", "pg-id", "bellman-id", "pg-w", "bellman-w"];

/// Every `result.json` under `root`, sorted by path.
pub fn collect_results(root: &Path) -> Result<Vec<(PathBuf, RunResult)>, Error> {
    let mut stack = vec![root.to_path_buf()];
    let mut found = Vec::new();
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == RESULT_FILE) {
                let text = std::fs::read_to_string(&path)?;
                let r: RunResult = serde_json::from_str(&text)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
                found.push((path, r));
            }
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found)
}

/// One row per (domain, regime, method). Cells for `methods` that have no
/// run in a (domain, regime) that does are emitted with `missing = true`.
pub fn build_table(results: &[RunResult], methods: &[&str]) -> Vec<TableRow> {
    let mut cells: BTreeMap<(String, String), BTreeMap<String, Vec<&RunResult>>> = BTreeMap::new();
    for r in results {
        cells.entry((r.domain.clone(), r.regime.clone())).or_default().entry(r.method.clone()).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((domain, regime), by_method) in &cells {
        let mut order: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
        for m in by_method.keys() {
            if !order.contains(m) {
                order.push(m.clone());
            }
        }
        for method in order {
            let runs = by_method.get(&method).cloned().unwrap_or_default();
            if runs.is_empty() {
                rows.push(TableRow {
                    domain: domain.clone(),
                    regime: regime.clone(),
                    method,
                    n_seeds: 0,
                    mean: f64::NAN,
                    stderr: f64::NAN,
                    lambda_ess: String::new(),
                    selection: String::new(),
                    missing: true,
                });
                continue;
            }
            let means: Vec<f64> = runs.iter().map(|r| r.test.mean).collect();
            let (mean, stderr) = mean_stderr(&means);
            let join = |f: &dyn Fn(&RunResult) -> String| {
                let mut v: Vec<String> = runs.iter().map(|r| f(r)).collect();
                v.sort();
                v.dedup();
                v.join("|")
            };
            rows.push(TableRow {
                domain: domain.clone(),
                regime: regime.clone(),
                method,
                n_seeds: runs.len(),
                mean,
                stderr,
                lambda_ess: join(&|r| r.lambda_ess.to_string()),
                selection: join(&|r| r.selection.clone()),
                missing: false,
            });
        }
    }
    rows
}

pub fn write_table_csv(rows: &[TableRow], path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
