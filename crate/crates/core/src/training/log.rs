use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mdp::Split;

use super::{Selection, TrainError};

/// One instance in one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub instance: usize,
    pub split: Split,
    /// Predictive loss before the update.
    pub loss: f64,
    /// Eval of the planned policy on this instance's logged trajectories.
    pub ope: Option<f64>,
    pub wallclock_backward_ms: Option<f64>,
    pub solve_checksum: String,
    /// Set when the instance was skipped.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    /// Epoch whose weights were returned (1-based).
    pub chosen_epoch: usize,
    pub selection: Selection,
    /// Some likelihood term was clipped.
    pub clipped: bool,
    pub warnings: Vec<String>,
}

impl TrainLog {
    pub fn new(selection: Selection) -> Self {
        TrainLog { rows: Vec::new(), chosen_epoch: 0, selection, clipped: false, warnings: Vec::new() }
    }

    pub fn epochs(&self) -> usize {
        self.rows.iter().map(|r| r.epoch).max().unwrap_or(0)
    }

    fn mean_of(&self, epoch: usize, split: Split, f: impl Fn(&LogRow) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.epoch == epoch && r.split == split).filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_loss(&self, epoch: usize, split: Split) -> Option<f64> {
        self.mean_of(epoch, split, |r| r.warning.is_none().then_some(r.loss))
    }

    pub fn mean_ope(&self, epoch: usize, split: Split) -> Option<f64> {
        self.mean_of(epoch, split, |r| r.ope)
    }

    pub fn backward_ms(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.wallclock_backward_ms).collect()
    }

    /// epoch, instance, split, loss, ope, wallclock_backward_ms, solve_checksum, warning
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<LogRow>, TrainError> {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<Result<_, _>>()?)
    }

    /// Rows sorted by (epoch, instance).
    pub fn is_ordered(&self) -> bool {
        self.rows.windows(2).all(|w| (w[0].epoch, w[0].instance) < (w[1].epoch, w[1].instance))
    }
}
