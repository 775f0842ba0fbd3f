use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{generate_dataset, sweep, GenerateConfig, RunResult, SweepParam, SweepRow, RESULT_FILE};
use crate::mdp::{load_dataset, save_checkpoint, save_dataset, Checkpoint, Dataset, Split};
use crate::training::{evaluate_split, train, TrainConfig};
use crate::Error;

pub const RUN_VERSION: &str = "dfmdp-run/1";
pub const CONFIG_FILE: &str = "config.json";
pub const MODEL_FILE: &str = "model.json";
pub const LOG_FILE: &str = "log.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0} already exists (use --force to overwrite)")]
    Exists(PathBuf),
    #[error("dataset {path} has sha256 {found}, the frozen config expects {expected}")]
    DatasetChanged { path: PathBuf, expected: String, found: String },
    #[error("bad run config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Resolved parameters of one command, frozen beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Generate { version: String, generate: GenerateConfig, out: PathBuf },
    Train { version: String, dataset: PathBuf, dataset_sha256: String, train: TrainConfig },
    Sweep { version: String, dataset: PathBuf, dataset_sha256: String, train: TrainConfig, param: SweepParam, values: Vec<f64> },
}

impl RunConfig {
    pub fn train(dataset: &Path, train: TrainConfig) -> Result<Self, Error> {
        Ok(RunConfig::Train {
            version: RUN_VERSION.into(),
            dataset: dataset.to_path_buf(),
            dataset_sha256: sha256_file(dataset)?,
            train,
        })
    }

    pub fn sweep(dataset: &Path, train: TrainConfig, param: SweepParam, values: Vec<f64>) -> Result<Self, Error> {
        Ok(RunConfig::Sweep {
            version: RUN_VERSION.into(),
            dataset: dataset.to_path_buf(),
            dataset_sha256: sha256_file(dataset)?,
            train,
            param,
            values,
        })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let version = match &cfg {
            RunConfig::Generate { version, .. } | RunConfig::Train { version, .. } | RunConfig::Sweep { version, .. } => version,
        };
        if version != RUN_VERSION {
            return Err(HarnessError::Config(format!("version {version}, expected {RUN_VERSION}")).into());
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, to_json(self)?)?;
        Ok(())
    }

    /// Re-executes the command into `out`.
    pub fn execute(&self, out: &Path, force: bool) -> Result<(), Error> {
        match self {
            RunConfig::Generate { generate, .. } => generate_file(generate, out, force).map(|_| ()),
            RunConfig::Train { .. } => train_run(self, out, force).map(|_| ()),
            RunConfig::Sweep { .. } => sweep_run(self, out, force).map(|_| ()),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(v).map_err(|e| HarnessError::Config(e.to_string()).into())
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn check_absent(path: &Path, force: bool) -> Result<(), HarnessError> {
    if path.exists() && !force {
        return Err(HarnessError::Exists(path.to_path_buf()));
    }
    Ok(())
}

/// `<file>.config.json` next to a generated dataset.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

/// Generates and saves a dataset plus its frozen config.
pub fn generate_file(cfg: &GenerateConfig, out: &Path, force: bool) -> Result<Dataset, Error> {
    check_absent(out, force)?;
    let ds = generate_dataset(cfg)?;
    save_dataset(&ds, out)?;
    RunConfig::Generate { version: RUN_VERSION.into(), generate: cfg.clone(), out: out.to_path_buf() }.save(&sidecar_path(out))?;
    Ok(ds)
}

fn open_dataset(path: &Path, expected: &str) -> Result<Dataset, Error> {
    let found = sha256_file(path)?;
    if found != expected {
        return Err(HarnessError::DatasetChanged { path: path.to_path_buf(), expected: expected.into(), found }.into());
    }
    Ok(load_dataset(path)?)
}

fn prepare_dir(out: &Path, force: bool) -> Result<(), Error> {
    if out.exists() && std::fs::read_dir(out)?.next().is_some() {
        check_absent(out, force)?;
    }
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// Trains, scores the test split, and writes config, checkpoint, log and result.
pub fn train_run(cfg: &RunConfig, out: &Path, force: bool) -> Result<RunResult, Error> {
    let RunConfig::Train { dataset, dataset_sha256, train: tc, .. } = cfg else {
        return Err(HarnessError::Config("not a train config".into()).into());
    };
    tc.validate()?;
    let ds = open_dataset(dataset, dataset_sha256)?;
    prepare_dir(out, force)?;
    cfg.save(&out.join(CONFIG_FILE))?;
    let outcome = train(&ds, tc)?;
    save_checkpoint(&Checkpoint::Predictive { model: outcome.model.clone() }, &out.join(MODEL_FILE))?;
    outcome.log.write_csv(&out.join(LOG_FILE))?;
    let test = evaluate_split(&outcome.model, &ds, Split::Test, tc.lambda_ess)?;
    let result = RunResult {
        domain: ds.spec.domain.name().into(),
        regime: ds.regime.name().into(),
        method: tc.method.name().into(),
        seed: tc.seed,
        lambda_ess: tc.lambda_ess,
        selection: tc.selection.name().into(),
        chosen_epoch: outcome.log.chosen_epoch,
        test,
        config: tc.clone(),
        dataset_sha256: dataset_sha256.clone(),
    };
    std::fs::write(out.join(RESULT_FILE), to_json(&result)?)?;
    Ok(result)
}

pub fn sweep_run(cfg: &RunConfig, out: &Path, force: bool) -> Result<Vec<SweepRow>, Error> {
    let RunConfig::Sweep { dataset, dataset_sha256, train: tc, param, values, .. } = cfg else {
        return Err(HarnessError::Config("not a sweep config".into()).into());
    };
    tc.validate()?;
    let ds = open_dataset(dataset, dataset_sha256)?;
    prepare_dir(out, force)?;
    cfg.save(&out.join(CONFIG_FILE))?;
    let rows = sweep(&ds, tc, *param, values)?;
    let mut w = csv::Writer::from_path(out.join(SWEEP_FILE)).map_err(HarnessError::from)?;
    for r in &rows {
        w.serialize(r).map_err(HarnessError::from)?;
    }
    w.flush()?;
    Ok(rows)
}
