use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{check_version, parse_tree};
use super::{MdpError, PredictiveModel};
use crate::solver::SolveResult;

pub const CHECKPOINT_VERSION: &str = "dfmdp-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Predictive { model: PredictiveModel },
    Solve { result: SolveResult },
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: String,
    #[serde(flatten)]
    body: Checkpoint,
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), MdpError> {
    let file = CheckpointFile { version: CHECKPOINT_VERSION.to_string(), body: ck.clone() };
    let text = serde_json::to_string_pretty(&file).map_err(|e| MdpError::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, MdpError> {
    let text = std::fs::read_to_string(path)?;
    let value = parse_tree(&text)?;
    check_version(&value, CHECKPOINT_VERSION)?;
    let file: CheckpointFile = serde_json::from_value(value).map_err(|e| MdpError::Parse(e.to_string()))?;
    let params = match &file.body {
        Checkpoint::Predictive { model } => &model.net.params,
        Checkpoint::Solve { result } => result.policy.params(),
    };
    if !params.layout_is_contiguous() || !params.all_finite() {
        return Err(MdpError::Invariant("weight segments are inconsistent or non-finite".into()));
    }
    Ok(file.body)
}
