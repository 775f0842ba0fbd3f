use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{validate_trajectory, EnvSpec, MdpError, MdpInstance, Trajectory};

pub const DATASET_VERSION: &str = "dfmdp-dataset/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// How the logged trajectories were collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Random,
    NearOptimal,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Random => "random",
            Regime::NearOptimal => "near_optimal",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Regime::Random),
            "near_optimal" | "near-optimal" => Ok(Regime::NearOptimal),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub split: Split,
    pub instance: MdpInstance,
    trajectories: Vec<Trajectory>,
}

impl Entry {
    pub fn new(split: Split, instance: MdpInstance, trajectories: Vec<Trajectory>) -> Self {
        Entry { split, instance, trajectories }
    }
}

#[derive(Debug, Default)]
struct Audit(AtomicUsize);

impl Clone for Audit {
    fn clone(&self) -> Self {
        Audit(AtomicUsize::new(self.0.load(Ordering::Relaxed)))
    }
}

impl PartialEq for Audit {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Instances with logged trajectories and train/val/test labels.
///
/// Trajectories are only reachable through [`Dataset::trajectories`], which
/// counts every read of a test instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub version: String,
    pub seed: u64,
    pub spec: EnvSpec,
    pub regime: Regime,
    pub noise_scale: f64,
    entries: Vec<Entry>,
    #[serde(skip)]
    test_reads: Audit,
}

impl Dataset {
    pub fn new(seed: u64, spec: EnvSpec, regime: Regime, noise_scale: f64, entries: Vec<Entry>) -> Self {
        Dataset {
            version: DATASET_VERSION.to_string(),
            seed,
            spec,
            regime,
            noise_scale,
            entries,
            test_reads: Audit::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn instance(&self, idx: usize) -> &MdpInstance {
        &self.entries[idx].instance
    }

    pub fn split_of(&self, idx: usize) -> Split {
        self.entries[idx].split
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].split == split).collect()
    }

    /// Logged trajectories of instance `idx`.
    pub fn trajectories(&self, idx: usize) -> &[Trajectory] {
        let e = &self.entries[idx];
        if e.split == Split::Test {
            self.test_reads.0.fetch_add(1, Ordering::Relaxed);
        }
        &e.trajectories
    }

    /// Number of test-trajectory reads so far.
    pub fn test_reads(&self) -> usize {
        self.test_reads.0.load(Ordering::Relaxed)
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.instance.spec != self.spec {
                return Err(MdpError::Invariant(format!("instance {i} has a different spec")));
            }
            e.instance.validate().map_err(|err| MdpError::Invariant(format!("instance {i}: {err}")))?;
            for t in &e.trajectories {
                validate_trajectory(&self.spec, t)
                    .map_err(|err| MdpError::Invariant(format!("instance {i}: {err}")))?;
            }
        }
        Ok(())
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), MdpError> {
    let text = serde_json::to_string(ds).map_err(|e| MdpError::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, MdpError> {
    let text = std::fs::read_to_string(path)?;
    let value = parse_tree(&text)?;
    check_version(&value, DATASET_VERSION)?;
    let ds: Dataset = serde_json::from_value(value).map_err(|e| MdpError::Parse(e.to_string()))?;
    ds.validate()?;
    Ok(ds)
}

pub(crate) fn parse_tree(text: &str) -> Result<serde_json::Value, MdpError> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Eof => MdpError::Truncated(e.to_string()),
        _ => MdpError::Parse(e.to_string()),
    })
}

pub(crate) fn check_version(value: &serde_json::Value, expected: &'static str) -> Result<(), MdpError> {
    match value.get("version").and_then(|v| v.as_str()) {
        Some(v) if v == expected => Ok(()),
        Some(v) => Err(MdpError::Version { found: v.to_string(), expected }),
        None => Err(MdpError::Version { found: "<missing>".into(), expected }),
    }
}
