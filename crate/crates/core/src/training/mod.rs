//! Two-stage and decision-focused trainers for the predictive model.

mod config;
mod log;
mod loss;
mod planner;
mod trainer;

pub use config::{Method, Selection, TrainConfig};
pub use log::{LogRow, TrainLog};
pub use loss::{two_stage_loss, LossReport, NLL_CLIP};
pub use planner::Planner;
pub use trainer::{evaluate_split, evaluate_split_with, gradient_step, mean_stderr, train, train_decision_focused, train_two_stage, SplitEval, TrainOutcome};

use thiserror::Error;

use crate::diffmdp::DiffError;
use crate::mdp::MdpError;
use crate::ope::OpeError;
use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("the {0:?} split is empty")]
    EmptySplit(crate::mdp::Split),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("{method} is not a decision-focused method")]
    NotDecisionFocused { method: Method },
    #[error("predicted parameters: {0}")]
    Prediction(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Ope(#[from] OpeError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
